use serde::{Deserialize, Serialize};

use super::grf::{sample_initial_vorticity, GrfSpec};
use super::grid::GridSpec;
use super::ns::{simulate_ns, simulate_ns_decimated, NsParams};
use crate::datastore::{DatasetBundle, Norm, Splits, Trajectory, Window};
use crate::error::{Error, Result};

/// How raw trajectories are cut into training and evaluation data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Leading snapshots dropped from every trajectory.
    pub burn_in: usize,
    /// Training window length after burn-in; `None` takes everything up to
    /// the extrapolation window.
    pub train_len: Option<usize>,
    pub extrap_len: usize,
    /// The first `n_train` trajectories train, the rest test.
    pub n_train: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            burn_in: 10,
            train_len: Some(30),
            extrap_len: 10,
            n_train: 900,
        }
    }
}

pub fn build_dataset(trajectories: Vec<Trajectory>, grid: GridSpec, split: &SplitSpec) -> Result<DatasetBundle> {
    grid.validate()?;
    let first = trajectories
        .first()
        .ok_or_else(|| Error::config("trajectories", "no trajectories to build a dataset from"))?;
    let (len, dt) = (first.len(), first.dt);
    for (i, t) in trajectories.iter().enumerate() {
        if t.shape != grid.shape() {
            return Err(Error::Shape(format!(
                "trajectory {i} has shape {:?}, grid is {:?}",
                t.shape,
                grid.shape()
            )));
        }
        if t.len() != len || t.dt != dt {
            return Err(Error::config(
                "trajectories",
                format!("trajectory {i} differs in length or time step from trajectory 0"),
            ));
        }
    }
    if split.burn_in >= len {
        return Err(Error::config("burn_in", format!("burn-in {} >= trajectory length {len}", split.burn_in)));
    }
    let avail = len - split.burn_in;
    let train_len = match split.train_len {
        Some(l) => l,
        None => avail.checked_sub(split.extrap_len).ok_or_else(|| {
            Error::config("extrap_len", "extrapolation window longer than the trajectory")
        })?,
    };
    if train_len == 0 || train_len + split.extrap_len > avail {
        return Err(Error::config(
            "train_len",
            format!(
                "windows {train_len} + {} exceed the {avail} snapshots left after burn-in",
                split.extrap_len
            ),
        ));
    }
    if split.n_train == 0 || split.n_train > trajectories.len() {
        return Err(Error::config(
            "n_train",
            format!("n_train = {} with {} trajectories", split.n_train, trajectories.len()),
        ));
    }
    let keep = train_len + split.extrap_len;
    let trimmed = trajectories
        .into_iter()
        .map(|t| t.slice(split.burn_in, keep))
        .collect::<Result<Vec<_>>>()?;
    let n = trimmed.len();
    let splits = Splits {
        train: (0..split.n_train).collect(),
        test: (split.n_train..n).collect(),
        burn_in: split.burn_in,
        train_window: Window { start: 0, len: train_len },
        extrap_window: Window {
            start: train_len,
            len: split.extrap_len,
        },
    };
    let norm = Norm::from_training(&trimmed, &splits)?;
    Ok(DatasetBundle {
        grid,
        trajectories: trimmed,
        norm,
        splits,
    })
}

/// Everything needed to synthesize a vorticity corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsCorpusSpec {
    pub grid: GridSpec,
    pub params: NsParams,
    pub grf: GrfSpec,
    pub n_traj: usize,
    /// Simulate at twice the resolution and keep every other point.
    pub supersample: bool,
    pub workers: usize,
}

/// SplitMix64 step; gives every trajectory an independent seed.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_ns_trajectory(spec: &NsCorpusSpec, index: usize) -> Result<Trajectory> {
    let grf = GrfSpec {
        seed: derive_seed(spec.grf.seed, index as u64),
        ..spec.grf
    };
    if spec.supersample {
        let fine = GridSpec::new(spec.grid.nx * 2, 2)?;
        let w0 = sample_initial_vorticity(&fine, &grf)?;
        simulate_ns_decimated(&w0, &spec.params, &spec.grid)
    } else {
        let w0 = sample_initial_vorticity(&spec.grid, &grf)?;
        simulate_ns(&w0, &spec.params, &spec.grid)
    }
}

/// Generates `spec.n_traj` trajectories, split over `spec.workers` threads.
/// Output does not depend on the worker count.
pub fn generate_ns_corpus(spec: &NsCorpusSpec) -> Result<Vec<Trajectory>> {
    let workers = spec.workers.clamp(1, spec.n_traj.max(1));
    if workers == 1 {
        return (0..spec.n_traj).map(|i| generate_ns_trajectory(spec, i)).collect();
    }
    let mut slots: Vec<Option<Result<Trajectory>>> = (0..spec.n_traj).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, chunk) in slots.chunks_mut(spec.n_traj.div_ceil(workers)).enumerate() {
            let base = w * spec.n_traj.div_ceil(workers);
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(generate_ns_trajectory(spec, base + k));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}
