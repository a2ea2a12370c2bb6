//! Stage I: autoencoder training on shuffled four-step segments.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::{clip_grad_norm, Adam, Shuffler};
use crate::datastore::{DatasetBundle, Window};
use crate::error::{Error, Result};
use crate::infer::encode_window;
use crate::losses::{jerk_of_latents, mse, stage1_backward, Segment, SegmentBatch};
use crate::nets::{decode_many, ModelState};
use crate::pdegen::derive_seed;

/// Every overlapping four-step window of the training window of every
/// trajectory in `ids`.
pub fn segments_for(bundle: &DatasetBundle, ids: &[usize], window: Window) -> Result<Vec<Segment>> {
    if window.len < 4 {
        return Err(Error::config(
            "splits.train_window",
            format!("window of {} snapshots is shorter than a four-step segment", window.len),
        ));
    }
    let mut out = Vec::with_capacity(ids.len() * (window.len - 3));
    for &traj in ids {
        if traj >= bundle.trajectories.len() || bundle.trajectories[traj].len() < window.start + window.len {
            return Err(Error::Shape(format!("trajectory {traj} does not cover the training window")));
        }
        out.extend((0..window.len - 3).map(|j| Segment {
            traj,
            start: window.start + j,
        }));
    }
    Ok(out)
}

/// Training segments: `L - 3` per training trajectory.
pub fn make_segments(bundle: &DatasetBundle) -> Result<Vec<Segment>> {
    segments_for(bundle, &bundle.splits.train, bundle.splits.train_window)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub recon: f64,
    pub jerk: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub iter: usize,
    pub test_recon: f64,
    pub test_jerk: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub iterations: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// Reconstruction MSE over every snapshot and mean window jerk over every
/// four-step window of `window` in trajectories `ids`, in normalized units.
pub fn stage1_metrics(state: &ModelState, bundle: &DatasetBundle, ids: &[usize], window: Window) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let coords = bundle.grid.coords();
    let (mut recon, mut jerk) = (0.0, 0.0);
    for &ti in ids {
        let lat = encode_window(state, bundle, ti, window.range())?;
        let y = decode_many(state, &lat.values, lat.len(), &coords)?;
        let t = &bundle.trajectories[ti];
        let truth = &t.data[window.start * t.points()..(window.start + window.len) * t.points()];
        recon += mse(&y, truth) / (bundle.norm.std * bundle.norm.std);
        let d = lat.d_z;
        let windows: Vec<f64> = (0..lat.len().saturating_sub(3))
            .flat_map(|s| lat.values[s * d..(s + 4) * d].to_vec())
            .collect();
        jerk += jerk_of_latents(&windows, lat.len() - 3, d)?;
    }
    Ok((recon / ids.len() as f64, jerk / ids.len() as f64))
}

/// Number of optimizer steps a stage-I run will take.
pub fn stage1_iterations(n_segments: usize, cfg: &TrainConfig) -> usize {
    let per_epoch = n_segments.div_ceil(cfg.stage1.batch_size);
    let all = per_epoch * cfg.stage1.epochs;
    cfg.stage1.max_iterations.map_or(all, |m| m.min(all))
}

pub fn train_stage1(bundle: &DatasetBundle, model: ModelState, cfg: &TrainConfig) -> Result<(ModelState, LossHistory)> {
    train_stage1_logged(bundle, model, cfg, &mut |_| {})
}

/// Stage-I training; `log` sees every iteration record as it is produced.
pub fn train_stage1_logged(
    bundle: &DatasetBundle,
    mut model: ModelState,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&IterRecord),
) -> Result<(ModelState, LossHistory)> {
    cfg.validate()?;
    bundle.validate()?;
    if bundle.grid.nx != model.arch.encoder.nx || bundle.grid.ndim != model.arch.encoder.ndim {
        return Err(Error::Shape(format!(
            "dataset grid {}^{} does not match encoder input {}^{}",
            bundle.grid.nx, bundle.grid.ndim, model.arch.encoder.nx, model.arch.encoder.ndim
        )));
    }
    model.norm = bundle.norm;
    let segments = make_segments(bundle)?;
    if segments.is_empty() {
        return Err(Error::config("splits.train", "no training trajectories"));
    }
    let s1 = &cfg.stage1;
    let total = stage1_iterations(segments.len(), cfg);
    let mut shuffler = Shuffler::new(segments.len(), derive_seed(cfg.seed, 0x5e61));
    let mut opt_enc = Adam::new(&model.encoder.params);
    let mut opt_dec = Adam::new(&model.decoder.params);
    let mut hist = LossHistory::default();
    let mut iter = 0;
    let test_ids = bundle.splits.test.clone();
    'epochs: for epoch in 0..s1.epochs {
        for idx in shuffler.epoch(s1.batch_size) {
            if iter >= total {
                break 'epochs;
            }
            let chunk: Vec<Segment> = idx.iter().map(|&i| segments[i]).collect();
            let batch = SegmentBatch::<f32>::gather(bundle, &chunk)?;
            let mut grads = model.zero_grads();
            let l = stage1_backward(&model, &batch, 1.0, cfg.lambda, &mut grads)?;
            let lr = s1.schedule.rate(s1.lr, iter, total);
            if !l.total.is_finite() || !grads.encoder.all_finite() || !grads.decoder.all_finite() {
                let last = hist.iterations.last();
                return Err(Error::Diverged(format!(
                    "non-finite stage-I loss at iteration {iter} (lambda = {}, lr = {lr:.3e}); last finite recon = {:?}, jerk = {:?}",
                    cfg.lambda,
                    last.map(|r| r.recon),
                    last.map(|r| r.jerk)
                )));
            }
            if let Some(c) = s1.clip {
                clip_grad_norm(&mut [&mut grads.encoder, &mut grads.decoder], c);
            }
            opt_enc.step(&mut model.encoder.params, &grads.encoder, lr);
            opt_dec.step(&mut model.decoder.params, &grads.decoder, lr);
            let rec = IterRecord {
                iter,
                epoch,
                lr,
                total: l.total,
                recon: l.recon,
                jerk: l.jerk,
            };
            log(&rec);
            hist.iterations.push(rec);
            iter += 1;
        }
        let (test_recon, test_jerk) = stage1_metrics(&model, bundle, &test_ids, bundle.splits.train_window)?;
        hist.epochs.push(EpochRecord {
            epoch,
            iter,
            test_recon,
            test_jerk,
        });
    }
    if hist.epochs.last().map_or(true, |e| e.iter != iter) {
        let (test_recon, test_jerk) = stage1_metrics(&model, bundle, &test_ids, bundle.splits.train_window)?;
        hist.epochs.push(EpochRecord {
            epoch: hist.iterations.last().map_or(0, |r| r.epoch),
            iter,
            test_recon,
            test_jerk,
        });
    }
    Ok((model, hist))
}
