//! Reconstruction, jerk, stage-I and latent-ODE losses.
//!
//! All field-space losses are evaluated on normalized values. The jerk of a
//! four-step window is `||z3 - 3 z2 + 3 z1 - z0||^2 / d_z`.

use crate::datastore::DatasetBundle;
use crate::error::{Error, Result};
use crate::nets::{LatentTrajectory, ModelGrads, ModelState};
use crate::real::Real;

/// Coefficients of the third forward difference, applied to `z0..z3`.
pub const THIRD_DIFF: [f64; 4] = [-1.0, 3.0, -3.0, 1.0];

/// Four consecutive snapshots `start..start + 4` of trajectory `traj`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub traj: usize,
    pub start: usize,
}

/// Normalized snapshots of a set of segments, laid out
/// `[segment][step][point]`, together with the grid coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentBatch<T> {
    pub data: Vec<T>,
    pub n_segments: usize,
    pub n_points: usize,
    pub coords: Vec<f64>,
}

impl<T: Real> SegmentBatch<T> {
    pub fn gather(bundle: &DatasetBundle, segments: &[Segment]) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::config("batch_size", "a segment batch needs at least one segment"));
        }
        let n = bundle.grid.len();
        let mut data = Vec::with_capacity(segments.len() * 4 * n);
        for s in segments {
            let t = bundle
                .trajectories
                .get(s.traj)
                .ok_or_else(|| Error::Shape(format!("segment refers to missing trajectory {}", s.traj)))?;
            if s.start + 4 > t.len() {
                return Err(Error::Shape(format!(
                    "segment {}..{} exceeds trajectory {} of {} snapshots",
                    s.start,
                    s.start + 4,
                    s.traj,
                    t.len()
                )));
            }
            for k in 0..4 {
                data.extend(t.snapshot(s.start + k).iter().map(|&v| T::lit(bundle.norm.apply(v) as f64)));
            }
        }
        Ok(SegmentBatch {
            data,
            n_segments: segments.len(),
            n_points: n,
            coords: bundle.grid.coords(),
        })
    }

    /// Builds a batch from already normalized data (`[segment][step][point]`).
    pub fn from_raw(data: Vec<T>, n_segments: usize, coords: Vec<f64>, ndim: usize) -> Result<Self> {
        let n_points = coords.len() / ndim.max(1);
        if n_segments == 0 || data.len() != n_segments * 4 * n_points {
            return Err(Error::Shape(format!(
                "{} values do not form {n_segments} four-step segments of {n_points} points",
                data.len()
            )));
        }
        Ok(SegmentBatch {
            data,
            n_segments,
            n_points,
            coords,
        })
    }

    pub fn snapshots(&self) -> usize {
        4 * self.n_segments
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage1Loss {
    pub total: f64,
    pub recon: f64,
    pub jerk: f64,
}

/// Jerk of one window `z0..z3`.
pub fn window_jerk(z: [&[f64]; 4]) -> f64 {
    let d_z = z[0].len();
    let mut acc = 0.0;
    for i in 0..d_z {
        let r: f64 = (0..4).map(|k| THIRD_DIFF[k] * z[k][i]).sum();
        acc += r * r;
    }
    acc / d_z as f64
}

/// Mean window jerk of `n_segments` stacked four-step latent sequences
/// (`[segment][step][d_z]`).
pub fn jerk_of_latents(z: &[f64], n_segments: usize, d_z: usize) -> Result<f64> {
    if n_segments == 0 || d_z == 0 || z.len() != n_segments * 4 * d_z {
        return Err(Error::Shape(format!(
            "{} latent values do not form {n_segments} segments of 4 x {d_z}",
            z.len()
        )));
    }
    let total: f64 = z
        .chunks(4 * d_z)
        .map(|s| window_jerk([&s[..d_z], &s[d_z..2 * d_z], &s[2 * d_z..3 * d_z], &s[3 * d_z..]]))
        .sum();
    Ok(total / n_segments as f64)
}

/// Mean squared difference.
pub fn mse<T: Real>(a: &[T], b: &[T]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.to_f64().unwrap_or(f64::NAN) - y.to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum();
    s / a.len().max(1) as f64
}

fn check_grid<T: Real>(state: &ModelState<T>, batch: &SegmentBatch<T>) -> Result<()> {
    if batch.n_points != state.encoder.input_len() {
        return Err(Error::Shape(format!(
            "batch snapshots have {} points, encoder expects {}",
            batch.n_points,
            state.encoder.input_len()
        )));
    }
    Ok(())
}

fn encode_batch<T: Real>(state: &ModelState<T>, batch: &SegmentBatch<T>) -> Result<Vec<T>> {
    check_grid(state, batch)?;
    state.encoder.forward(&batch.data, batch.snapshots())
}

pub fn recon_loss<T: Real>(state: &ModelState<T>, batch: &SegmentBatch<T>) -> Result<f64> {
    let z = encode_batch(state, batch)?;
    let feats = state.decoder.features(&batch.coords)?;
    let y = state.decoder.forward(&z, batch.snapshots(), &feats)?;
    Ok(mse(&y, &batch.data))
}

pub fn jerk_loss<T: Real>(state: &ModelState<T>, batch: &SegmentBatch<T>) -> Result<f64> {
    let z = encode_batch(state, batch)?;
    jerk_of_latents(&crate::real::to_f64(&z), batch.n_segments, state.d_z())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config("lambda", format!("jerk coefficient must be >= 0, got {lambda}")));
    }
    Ok(())
}

pub fn stage1_loss<T: Real>(state: &ModelState<T>, batch: &SegmentBatch<T>, lambda: f64) -> Result<Stage1Loss> {
    check_lambda(lambda)?;
    let z = encode_batch(state, batch)?;
    let feats = state.decoder.features(&batch.coords)?;
    let y = state.decoder.forward(&z, batch.snapshots(), &feats)?;
    let recon = mse(&y, &batch.data);
    let jerk = jerk_of_latents(&crate::real::to_f64(&z), batch.n_segments, state.d_z())?;
    Ok(Stage1Loss {
        total: recon + lambda * jerk,
        recon,
        jerk,
    })
}

/// Evaluates `w_recon * recon + w_jerk * jerk` and accumulates its gradient
/// with respect to encoder and decoder parameters into `grads`.
pub fn stage1_backward<T: Real>(
    state: &ModelState<T>,
    batch: &SegmentBatch<T>,
    w_recon: f64,
    w_jerk: f64,
    grads: &mut ModelGrads<T>,
) -> Result<Stage1Loss> {
    check_lambda(w_jerk)?;
    check_grid(state, batch)?;
    let nsnap = batch.snapshots();
    let d_z = state.d_z();
    let (z, enc_cache) = state.encoder.forward_cached(&batch.data, nsnap)?;
    let feats = state.decoder.features(&batch.coords)?;
    let (y, dec_cache) = state.decoder.forward_cached(&z, nsnap, &feats)?;
    let recon = mse(&y, &batch.data);
    let zf = crate::real::to_f64(&z);
    let jerk = jerk_of_latents(&zf, batch.n_segments, d_z)?;

    let scale = T::lit(2.0 * w_recon / y.len() as f64);
    let dy: Vec<T> = y.iter().zip(&batch.data).map(|(&a, &b)| scale * (a - b)).collect();
    let mut dz = state.decoder.backward(&dec_cache, dy, nsnap, &mut grads.decoder);
    if w_jerk != 0.0 {
        let c = 2.0 * w_jerk / (batch.n_segments * d_z) as f64;
        for s in 0..batch.n_segments {
            let seg = &zf[s * 4 * d_z..(s + 1) * 4 * d_z];
            for i in 0..d_z {
                let r: f64 = (0..4).map(|k| THIRD_DIFF[k] * seg[k * d_z + i]).sum();
                for k in 0..4 {
                    dz[(s * 4 + k) * d_z + i] += T::lit(c * THIRD_DIFF[k] * r);
                }
            }
        }
    }
    state.encoder.backward(&enc_cache, &dz, &mut grads.encoder);
    Ok(Stage1Loss {
        total: w_recon * recon + w_jerk * jerk,
        recon,
        jerk,
    })
}

/// `sum_t ||zhat(t) - z(t)||^2` over all stored times.
pub fn ode_loss(predicted: &LatentTrajectory, actual: &LatentTrajectory) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.d_z != actual.d_z {
        return Err(Error::Shape(format!(
            "latent trajectories differ in shape: {} x {} vs {} x {}",
            predicted.len(),
            predicted.d_z,
            actual.len(),
            actual.d_z
        )));
    }
    Ok(predicted
        .values
        .iter()
        .zip(&actual.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}
