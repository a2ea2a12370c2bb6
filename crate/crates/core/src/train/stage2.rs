//! Stage II: fitting the latent vector field by backpropagating through a
//! fixed-step RK4 solve of whole trajectories.
//!
//! Only the states at data times are kept during the forward solve; each
//! interval is re-integrated during the backward sweep to rebuild the
//! activations of its substeps.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::{clip_grad_norm, Adam, Shuffler};
use crate::error::{Error, Result};
use crate::infer::{default_substep, substeps};
use crate::nets::mlp::MlpCache;
use crate::nets::{LatentTrajectory, OdeFunc, ParamSet};
use crate::pdegen::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    pub iter: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Batch mean of the per-trajectory latent residual.
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Epoch {
    pub epoch: usize,
    pub iter: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage2History {
    pub iterations: Vec<Stage2Record>,
    pub epochs: Vec<Stage2Epoch>,
}

/// Trajectories of one batch, stacked `[time][trajectory][d_z]`.
struct Batch {
    rows: usize,
    d_z: usize,
    len: usize,
    /// Substeps per interval and their size.
    intervals: Vec<(usize, f32)>,
    target: Vec<f32>,
}

fn stack(trajs: &[&LatentTrajectory], max_substep: Option<f64>) -> Result<Batch> {
    let first = trajs[0];
    let (len, d) = (first.len(), first.d_z);
    for t in trajs {
        if t.len() != len || t.d_z != d {
            return Err(Error::Shape("latent trajectories in a batch differ in length or d_z".into()));
        }
        if t.times.iter().zip(&first.times).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::Shape("latent trajectories in a batch differ in their time grids".into()));
        }
    }
    if len < 2 {
        return Err(Error::config("latents", "stage II needs trajectories of at least two states"));
    }
    let dt = first.dt().unwrap_or(first.times[1] - first.times[0]);
    let hmax = max_substep.unwrap_or_else(|| default_substep(dt));
    let intervals = first
        .times
        .windows(2)
        .map(|w| {
            let n = substeps(w[1] - w[0], hmax);
            (n, ((w[1] - w[0]) / n as f64) as f32)
        })
        .collect();
    let rows = trajs.len();
    let mut target = vec![0.0f32; len * rows * d];
    for (b, t) in trajs.iter().enumerate() {
        for k in 0..len {
            for i in 0..d {
                target[(k * rows + b) * d + i] = t.state(k)[i] as f32;
            }
        }
    }
    Ok(Batch {
        rows,
        d_z: d,
        len,
        intervals,
        target,
    })
}

fn axpy(out: &mut [f32], z: &[f32], a: f32, k: &[f32]) {
    for ((o, &zi), &ki) in out.iter_mut().zip(z).zip(k) {
        *o = zi + a * ki;
    }
}

fn rk4_step(f: &OdeFunc<f32>, z: &[f32], h: f32, rows: usize, tmp: &mut [f32]) -> Result<Vec<f32>> {
    let k1 = f.eval(z, rows)?;
    axpy(tmp, z, 0.5 * h, &k1);
    let k2 = f.eval(tmp, rows)?;
    axpy(tmp, z, 0.5 * h, &k2);
    let k3 = f.eval(tmp, rows)?;
    axpy(tmp, z, h, &k3);
    let k4 = f.eval(tmp, rows)?;
    Ok((0..z.len())
        .map(|j| z[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect())
}

/// Solves from the first target state; returns the states at every data time.
fn rollout(f: &OdeFunc<f32>, batch: &Batch, times: &[f64]) -> Result<Vec<f32>> {
    let n = batch.rows * batch.d_z;
    let mut states = batch.target[..n].to_vec();
    let mut z = states.clone();
    let mut tmp = vec![0.0f32; n];
    for (k, &(ns, h)) in batch.intervals.iter().enumerate() {
        for _ in 0..ns {
            z = rk4_step(f, &z, h, batch.rows, &mut tmp)?;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegratorBlowup {
                last_finite_time: times[k],
            });
        }
        states.extend_from_slice(&z);
    }
    Ok(states)
}

fn residual_loss(states: &[f32], batch: &Batch) -> f64 {
    let s: f64 = states
        .iter()
        .zip(&batch.target)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    s / batch.rows as f64
}

/// Loss and parameter gradient for one batch.
fn loss_and_grad(f: &OdeFunc<f32>, batch: &Batch, times: &[f64], grads: &mut ParamSet<f32>) -> Result<f64> {
    let states = rollout(f, batch, times)?;
    let loss = residual_loss(&states, batch);
    let n = batch.rows * batch.d_z;
    let rows = batch.rows;
    let scale = 2.0 / rows as f32;
    let mut adj = vec![0.0f32; n];
    let mut tmp = vec![0.0f32; n];
    for k in (0..batch.len - 1).rev() {
        let at = (k + 1) * n;
        for j in 0..n {
            adj[j] += scale * (states[at + j] - batch.target[at + j]);
        }
        let (ns, h) = batch.intervals[k];
        // Rebuild the substep inputs of this interval.
        let mut inputs = Vec::with_capacity(ns);
        let mut z = states[k * n..(k + 1) * n].to_vec();
        for s in 0..ns {
            inputs.push(z.clone());
            if s + 1 < ns {
                z = rk4_step(f, &z, h, rows, &mut tmp)?;
            }
        }
        for z in inputs.iter().rev() {
            let (k1, c1) = f.eval_cached(z.clone(), rows);
            axpy(&mut tmp, z, 0.5 * h, &k1);
            let (k2, c2) = f.eval_cached(tmp.clone(), rows);
            axpy(&mut tmp, z, 0.5 * h, &k2);
            let (k3, c3) = f.eval_cached(tmp.clone(), rows);
            axpy(&mut tmp, z, h, &k3);
            let (_, c4) = f.eval_cached(tmp.clone(), rows);
            adj = rk4_adjoint(f, &adj, h, [&c1, &c2, &c3, &c4], grads);
        }
    }
    Ok(loss)
}

/// Pulls `dL/dz_{n+1}` back through one RK4 step, accumulating parameter gradients.
fn rk4_adjoint(f: &OdeFunc<f32>, a: &[f32], h: f32, caches: [&MlpCache<f32>; 4], grads: &mut ParamSet<f32>) -> Vec<f32> {
    let g4: Vec<f32> = a.iter().map(|v| v * h / 6.0).collect();
    let d4 = f.backward(caches[3], g4, grads);
    let g3: Vec<f32> = a.iter().zip(&d4).map(|(v, d)| v * h / 3.0 + h * d).collect();
    let d3 = f.backward(caches[2], g3, grads);
    let g2: Vec<f32> = a.iter().zip(&d3).map(|(v, d)| v * h / 3.0 + 0.5 * h * d).collect();
    let d2 = f.backward(caches[1], g2, grads);
    let g1: Vec<f32> = a.iter().zip(&d2).map(|(v, d)| v * h / 6.0 + 0.5 * h * d).collect();
    let d1 = f.backward(caches[0], g1, grads);
    (0..a.len()).map(|j| a[j] + d1[j] + d2[j] + d3[j] + d4[j]).collect()
}

/// Mean latent residual of `f` over `trajs` (each integrated on its own grid).
pub fn stage2_loss(f: &OdeFunc<f32>, trajs: &[&LatentTrajectory], max_substep: Option<f64>) -> Result<f64> {
    if trajs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut acc = 0.0;
    for chunk in trajs.chunks(64) {
        let batch = stack(chunk, max_substep)?;
        let states = rollout(f, &batch, &chunk[0].times)?;
        acc += residual_loss(&states, &batch) * chunk.len() as f64;
    }
    Ok(acc / trajs.len() as f64)
}

/// Number of optimizer steps a stage-II run will take.
pub fn stage2_iterations(n_traj: usize, cfg: &TrainConfig) -> usize {
    let all = n_traj.div_ceil(cfg.stage2.batch_size) * cfg.stage2.epochs;
    cfg.stage2.max_iterations.map_or(all, |m| m.min(all))
}

pub fn train_stage2(
    latents: &[LatentTrajectory],
    odefunc: OdeFunc<f32>,
    cfg: &TrainConfig,
) -> Result<(OdeFunc<f32>, Stage2History)> {
    train_stage2_logged(latents, odefunc, cfg, &mut |_| {})
}

/// Stage-II training on the non-test trajectories of `latents`; flagged test
/// trajectories are only evaluated once per epoch.
pub fn train_stage2_logged(
    latents: &[LatentTrajectory],
    mut f: OdeFunc<f32>,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&Stage2Record),
) -> Result<(OdeFunc<f32>, Stage2History)> {
    cfg.validate()?;
    let train: Vec<&LatentTrajectory> = latents.iter().filter(|t| !t.test).collect();
    let test: Vec<&LatentTrajectory> = latents.iter().filter(|t| t.test).collect();
    if train.is_empty() {
        return Err(Error::config("latents", "stage II needs at least one training trajectory"));
    }
    if train[0].d_z != f.cfg.d_z {
        return Err(Error::Shape(format!(
            "latent data has d_z = {}, ODE function expects {}",
            train[0].d_z, f.cfg.d_z
        )));
    }
    let s2 = &cfg.stage2;
    let total = stage2_iterations(train.len(), cfg);
    let mut shuffler = Shuffler::new(train.len(), derive_seed(cfg.seed, 0x5e62));
    let mut opt = Adam::new(&f.params);
    let mut hist = Stage2History::default();
    let mut iter = 0;
    'epochs: for epoch in 0..s2.epochs {
        let mut epoch_loss = 0.0;
        let mut seen = 0;
        for idx in shuffler.epoch(s2.batch_size) {
            if iter >= total {
                break 'epochs;
            }
            let chunk: Vec<&LatentTrajectory> = idx.iter().map(|&i| train[i]).collect();
            let batch = stack(&chunk, s2.max_substep)?;
            let mut grads = f.params.zeros_like();
            let lr = s2.schedule.rate(s2.lr, iter, total);
            let loss = loss_and_grad(&f, &batch, &chunk[0].times, &mut grads).map_err(|e| match e {
                Error::IntegratorBlowup { last_finite_time } => Error::Diverged(format!(
                    "latent integration blew up after t = {last_finite_time} at iteration {iter} (lr = {lr:.3e}); last loss {:?}",
                    hist.iterations.last().map(|r: &Stage2Record| r.loss)
                )),
                other => other,
            })?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged(format!("non-finite stage-II loss at iteration {iter}")));
            }
            let grad_norm = match s2.clip {
                Some(c) => clip_grad_norm(&mut [&mut grads], c),
                None => grads.sq_norm().sqrt(),
            };
            opt.step(&mut f.params, &grads, lr);
            let rec = Stage2Record {
                iter,
                epoch,
                lr,
                loss,
                grad_norm,
            };
            log(&rec);
            hist.iterations.push(rec);
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
            iter += 1;
        }
        let test_loss = if test.is_empty() {
            None
        } else {
            Some(stage2_loss(&f, &test, s2.max_substep)?)
        };
        hist.epochs.push(Stage2Epoch {
            epoch,
            iter,
            train_loss: epoch_loss / seen.max(1) as f64,
            test_loss,
        });
    }
    Ok((f, hist))
}
