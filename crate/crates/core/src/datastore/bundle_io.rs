use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{read_array, read_manifest, write_array, write_dir_atomic, write_manifest, ArrayEntry};
use super::types::{DatasetBundle, Norm, Splits, Trajectory};
use crate::error::{Error, Result};
use crate::pdegen::GridSpec;

pub const DATASET_FORMAT: &str = "jerkrom-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub t0: f64,
    pub dt: f64,
    pub array: ArrayEntry,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub grid: GridSpec,
    pub norm: Norm,
    pub splits: Splits,
    /// Fingerprint of the configuration that produced the data, if any.
    #[serde(default)]
    pub config_fingerprint: Option<String>,
    pub trajectories: Vec<TrajectoryEntry>,
}

pub fn save_dataset(bundle: &DatasetBundle, path: &Path) -> Result<()> {
    save_dataset_with_fingerprint(bundle, path, None)
}

pub fn save_dataset_with_fingerprint(bundle: &DatasetBundle, path: &Path, fingerprint: Option<&str>) -> Result<()> {
    bundle.validate()?;
    write_dir_atomic(path, |dir| {
        let mut entries = Vec::with_capacity(bundle.trajectories.len());
        for (i, t) in bundle.trajectories.iter().enumerate() {
            let mut shape = vec![t.len()];
            shape.extend(&t.shape);
            let array = ArrayEntry::f32(&format!("traj_{i:05}"), shape);
            write_array(dir, &array, &t.data)?;
            entries.push(TrajectoryEntry { t0: t.t0, dt: t.dt, array });
        }
        write_manifest(
            dir,
            &DatasetManifest {
                format: DATASET_FORMAT.into(),
                version: DATASET_VERSION,
                grid: bundle.grid,
                norm: bundle.norm,
                splits: bundle.splits.clone(),
                config_fingerprint: fingerprint.map(str::to_string),
                trajectories: entries,
            },
        )
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    read_manifest(path, DATASET_FORMAT, DATASET_VERSION)
}

pub fn load_dataset(path: &Path) -> Result<DatasetBundle> {
    let m = load_manifest(path)?;
    let mut trajectories = Vec::with_capacity(m.trajectories.len());
    for e in &m.trajectories {
        let corrupt = |msg: String| Error::Corruption {
            path: path.join(&e.array.file),
            msg,
        };
        if e.array.shape.len() != m.grid.ndim + 1 || e.array.shape[1..] != m.grid.shape()[..] {
            return Err(corrupt(format!(
                "array shape {:?} inconsistent with grid {:?}",
                e.array.shape, m.grid
            )));
        }
        let data = read_array(path, &e.array)?;
        let t = Trajectory::new(data, m.grid.shape(), e.t0, e.dt).map_err(|err| corrupt(err.to_string()))?;
        trajectories.push(t);
    }
    let bundle = DatasetBundle {
        grid: m.grid,
        trajectories,
        norm: m.norm,
        splits: m.splits,
    };
    bundle.validate().map_err(|e| Error::Corruption {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(bundle)
}
