//! End-to-end forecasting and rollout evaluation.

use serde::{Deserialize, Serialize};

use super::integrate::{integrate, IntegratorConfig};
use super::metrics::{average_jerk, count_active_coords, default_threshold, mean_relative_rmse, relative_rmse};
use crate::datastore::{DatasetBundle, FieldSnapshot};
use crate::error::{Error, Result};
use crate::losses::mse;
use crate::nets::{decode_many, encode, LatentTrajectory, LatentVector, ModelState, OdeFunc};
use crate::pdegen::uniform_coords;
use crate::real::Real;

/// Where and when to evaluate a forecast. Times are measured from the
/// initial snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    /// `ndim` values per query point; wrapped into the unit cell.
    pub coords: Vec<f64>,
    pub times: Vec<f64>,
}

impl QuerySpec {
    /// Uniform `res^ndim` lattice at the given times.
    pub fn grid(res: usize, ndim: usize, times: Vec<f64>) -> Self {
        QuerySpec {
            coords: uniform_coords(res, ndim),
            times,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub times: Vec<f64>,
    pub n_points: usize,
    /// `[time][point]` physical values.
    pub values: Vec<f32>,
    pub latents: LatentTrajectory,
}

impl Prediction {
    pub fn snapshot(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_points..(i + 1) * self.n_points]
    }
}

/// `z(t)` for every time, integrating the learned vector field from `z0`.
pub fn integrate_latent<T: Real>(
    odefunc: &OdeFunc<T>,
    z0: &LatentVector,
    times: &[f64],
    cfg: &IntegratorConfig,
    dt: f64,
) -> Result<LatentTrajectory> {
    let d = z0.d_z();
    let mut buf: Vec<T> = vec![T::zero(); d];
    let rhs = |z: &[f64]| {
        for (b, &v) in buf.iter_mut().zip(z) {
            *b = T::lit(v);
        }
        let h = odefunc.eval(&buf, 1)?;
        Ok(h.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
    };
    let values = integrate(rhs, &z0.values, times, cfg, dt)?;
    LatentTrajectory::new(0, times.to_vec(), d, values)
}

/// Encodes `u0`, integrates to every query time and decodes at every query point.
pub fn predict<T: Real>(
    state: &ModelState<T>,
    u0: &FieldSnapshot,
    query: &QuerySpec,
    cfg: &IntegratorConfig,
    dt: f64,
) -> Result<Prediction> {
    let z0 = encode(state, u0)?;
    let latents = integrate_latent(&state.odefunc, &z0, &query.times, cfg, dt)?;
    let values = decode_many(state, &latents.values, latents.len(), &query.coords)?;
    Ok(Prediction {
        times: query.times.clone(),
        n_points: query.coords.len() / state.arch.decoder.ndim,
        values,
        latents,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct WindowStats {
    /// Mean squared error in normalized units.
    pub mse: f64,
    pub rmse: f64,
    pub rel_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Time since the initial snapshot for each curve point.
    pub times: Vec<f64>,
    /// Relative RMSE per time, averaged over test trajectories.
    pub rel_rmse_curve: Vec<f64>,
    /// Number of curve points inside the training window.
    pub train_len: usize,
    pub interp: WindowStats,
    pub extrap: WindowStats,
    /// Stage-I reconstruction MSE (normalized units) over the training window of test trajectories.
    pub recon_mse: f64,
    /// Average jerk of each encoded test trajectory.
    pub avg_jerk: Vec<f64>,
    pub mean_avg_jerk: f64,
    pub active_threshold: f64,
    pub active_coords: usize,
    pub latent_variances: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EvalMode {
    #[default]
    Model,
    /// Uses the ground truth as the forecast (harness self-check).
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub integrator: IntegratorConfig,
    pub threshold: Option<f64>,
    pub mode: EvalMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            integrator: IntegratorConfig::default(),
            threshold: None,
            mode: EvalMode::Model,
        }
    }
}

/// Encodes snapshots `range` of trajectory `ti` into a latent trajectory.
pub fn encode_window<T: Real>(
    state: &ModelState<T>,
    bundle: &DatasetBundle,
    ti: usize,
    range: std::ops::Range<usize>,
) -> Result<LatentTrajectory> {
    let traj = &bundle.trajectories[ti];
    let n = range.len();
    let x: Vec<T> = traj.data[range.start * traj.points()..range.end * traj.points()]
        .iter()
        .map(|&v| T::lit(bundle.norm.apply(v) as f64))
        .collect();
    let z = state.encoder.forward(&x, n)?;
    let t0 = traj.time(range.start);
    LatentTrajectory::new(
        ti,
        range.map(|i| traj.time(i) - t0).collect(),
        state.d_z(),
        crate::real::to_f64(&z),
    )
}

fn window_stats(pred: &[f32], truth: &[f32], n_points: usize, norm_std: f64) -> Result<WindowStats> {
    let m = mse(pred, truth) / (norm_std * norm_std);
    Ok(WindowStats {
        mse: m,
        rmse: m.sqrt(),
        rel_rmse: mean_relative_rmse(pred, truth, n_points)?,
    })
}

/// Forecasts every test trajectory from the first training-window snapshot
/// across the training and extrapolation windows.
pub fn evaluate_rollout<T: Real>(state: &ModelState<T>, bundle: &DatasetBundle, opts: &EvalOptions) -> Result<EvalReport> {
    let sp = &bundle.splits;
    if sp.test.is_empty() {
        return Err(Error::config("splits.test", "evaluation needs at least one test trajectory"));
    }
    let n = bundle.grid.len();
    let start = sp.train_window.start;
    let end = (sp.extrap_window.start + sp.extrap_window.len).max(start + sp.train_window.len);
    let train_len = sp.train_window.len;
    let dt = bundle.dt();
    let times: Vec<f64> = (start..end).map(|i| (i - start) as f64 * dt).collect();
    let query = QuerySpec {
        coords: bundle.grid.coords(),
        times: times.clone(),
    };
    let mut curve = vec![0.0; times.len()];
    let (mut ip, mut it, mut ep, mut et) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut recon_acc = 0.0;
    let mut latents = Vec::with_capacity(sp.test.len());
    let mut avg_jerk = Vec::with_capacity(sp.test.len());
    for &ti in &sp.test {
        let traj = &bundle.trajectories[ti];
        let truth = &traj.data[start * n..end * n];
        let forecast: Vec<f32> = match opts.mode {
            EvalMode::Oracle => truth.to_vec(),
            EvalMode::Model => predict(state, &traj.to_snapshot(start), &query, &opts.integrator, dt)?.values,
        };
        for k in 0..times.len() {
            curve[k] += relative_rmse(&forecast[k * n..(k + 1) * n], &truth[k * n..(k + 1) * n])?;
        }
        let split = train_len.min(times.len()) * n;
        ip.extend_from_slice(&forecast[..split]);
        it.extend_from_slice(&truth[..split]);
        ep.extend_from_slice(&forecast[split..]);
        et.extend_from_slice(&truth[split..]);

        let lat = encode_window(state, bundle, ti, sp.train_window.range())?;
        let recon = match opts.mode {
            EvalMode::Oracle => truth[..split].to_vec(),
            EvalMode::Model => decode_many(state, &lat.values, lat.len(), &query.coords)?,
        };
        recon_acc += mse(&recon, &truth[..split]);
        avg_jerk.push(average_jerk(&lat)?);
        let mut lat = lat;
        lat.test = true;
        latents.push(lat);
    }
    let nt = sp.test.len() as f64;
    curve.iter_mut().for_each(|c| *c /= nt);
    let std = bundle.norm.std;
    let interp = window_stats(&ip, &it, n, std)?;
    let extrap = if ep.is_empty() {
        WindowStats::default()
    } else {
        window_stats(&ep, &et, n, std)?
    };
    let threshold = opts.threshold.unwrap_or_else(|| default_threshold(state.d_z()));
    let (active, variances) = count_active_coords(&latents, threshold)?;
    let mean_avg_jerk = avg_jerk.iter().sum::<f64>() / nt;
    Ok(EvalReport {
        times,
        rel_rmse_curve: curve,
        train_len,
        interp,
        extrap,
        recon_mse: recon_acc / nt / (std * std),
        avg_jerk,
        mean_avg_jerk,
        active_threshold: threshold,
        active_coords: active,
        latent_variances: variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{Norm, Splits, Trajectory, Window};
    use crate::nets::{init_model, ArchConfig, DecoderConfig, EncoderConfig, ModelState, OdeFuncConfig};
    use crate::pdegen::GridSpec;

    fn model() -> ModelState {
        let d_z = 3;
        let a = ArchConfig {
            encoder: EncoderConfig {
                nx: 8,
                widths: vec![4, 8],
                blocks: 2,
                d_z,
                ..Default::default()
            },
            decoder: DecoderConfig {
                hidden_layers: 2,
                width: 16,
                d_z,
                ..Default::default()
            },
            odefunc: OdeFuncConfig {
                hidden_layers: 2,
                width: 8,
                d_z,
                ..Default::default()
            },
        };
        let mut st = init_model(&a.encoder, &a.decoder, &a.odefunc, 3).unwrap();
        st.norm = Norm::new(0.1, 2.0).unwrap();
        st
    }

    fn bundle() -> DatasetBundle {
        let trajectories: Vec<Trajectory> = (0..3)
            .map(|k| {
                let data = (0..12 * 64)
                    .map(|i| (((i % 64) as f32) * 0.3 + (i / 64) as f32 * 0.1 * (k + 1) as f32).sin())
                    .collect();
                Trajectory::new(data, vec![8, 8], 0.0, 1.0).unwrap()
            })
            .collect();
        let splits = Splits {
            train: vec![0, 1],
            test: vec![2],
            burn_in: 0,
            train_window: Window { start: 0, len: 8 },
            extrap_window: Window { start: 8, len: 4 },
        };
        let norm = Norm::from_training(&trajectories, &splits).unwrap();
        DatasetBundle {
            grid: GridSpec::square(8).unwrap(),
            trajectories,
            norm,
            splits,
        }
    }

    #[test]
    fn zero_time_query_is_reconstruction() {
        let st = model();
        let b = bundle();
        let u0 = b.trajectories[0].to_snapshot(0);
        let q = QuerySpec::grid(8, 2, vec![0.0]);
        let p = predict(&st, &u0, &q, &IntegratorConfig::default(), 1.0).unwrap();
        let z = encode(&st, &u0).unwrap();
        let rec = crate::nets::decode(&st, &z, &q.coords).unwrap();
        assert_eq!(p.values, rec);
    }

    #[test]
    fn fine_query_restricts_to_coarse() {
        let st = model();
        let u0 = bundle().trajectories[1].to_snapshot(2);
        let times = vec![0.0, 1.0, 2.5];
        let cfg = IntegratorConfig::default();
        let coarse = predict(&st, &u0, &QuerySpec::grid(8, 2, times.clone()), &cfg, 1.0).unwrap();
        let fine = predict(&st, &u0, &QuerySpec::grid(32, 2, times), &cfg, 1.0).unwrap();
        assert!(fine.values.iter().all(|v| v.is_finite()));
        for t in 0..3 {
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(coarse.snapshot(t)[i * 8 + j], fine.snapshot(t)[(4 * i) * 32 + 4 * j]);
                }
            }
        }
    }

    #[test]
    fn latent_state_is_continuous_in_time() {
        let st = model();
        let u0 = bundle().trajectories[0].to_snapshot(0);
        let z0 = encode(&st, &u0).unwrap();
        let cfg = IntegratorConfig::default();
        let base = 24.0;
        let zt = integrate_latent(&st.odefunc, &z0, &[base], &cfg, 1.0).unwrap();
        let mut pts = Vec::new();
        for delta in [1e-1, 1e-2, 1e-3] {
            let zd = integrate_latent(&st.odefunc, &z0, &[base, base + delta], &cfg, 1.0).unwrap();
            let d: f64 = zd
                .state(1)
                .iter()
                .zip(zt.state(0))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            pts.push((delta.ln(), d.ln()));
        }
        let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn oracle_mode_has_zero_error() {
        let b = bundle();
        let opts = EvalOptions {
            mode: EvalMode::Oracle,
            ..Default::default()
        };
        let r = evaluate_rollout(&model(), &b, &opts).unwrap();
        assert!(r.rel_rmse_curve.iter().all(|&v| v == 0.0));
        assert_eq!(r.interp.mse, 0.0);
        assert_eq!(r.extrap.rel_rmse, 0.0);
        assert_eq!(r.recon_mse, 0.0);
        assert_eq!(r.times.len(), 12);
    }

    #[test]
    fn model_report_is_finite() {
        let r = evaluate_rollout(&model(), &bundle(), &EvalOptions::default()).unwrap();
        assert!(r.rel_rmse_curve.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(r.extrap.mse.is_finite() && r.recon_mse > 0.0);
        assert_eq!(r.avg_jerk.len(), 1);
        assert_eq!(r.latent_variances.len(), 3);
    }

    #[test]
    fn repeated_predictions_are_identical() {
        let st = model();
        let u0 = bundle().trajectories[2].to_snapshot(1);
        let q = QuerySpec::grid(8, 2, vec![0.5, 1.7]);
        let a = predict(&st, &u0, &q, &IntegratorConfig::default(), 1.0).unwrap();
        let b = predict(&st, &u0, &q, &IntegratorConfig::default(), 1.0).unwrap();
        assert_eq!(a, b);
    }
}
