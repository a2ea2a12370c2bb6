//! Latent-trajectory and prediction containers written by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datastore::{read_array, read_manifest, write_array, write_dir_atomic, write_manifest, ArrayEntry};
use crate::error::{Error, Result};
use crate::nets::LatentTrajectory;

pub const LATENTS_FORMAT: &str = "jerkrom-latents";
pub const LATENTS_VERSION: u32 = 1;
pub const PREDICTION_FORMAT: &str = "jerkrom-prediction";
pub const PREDICTION_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct LatentEntry {
    pub source: usize,
    pub test: bool,
    pub times: Vec<f64>,
    pub array: ArrayEntry,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LatentsManifest {
    pub format: String,
    pub version: u32,
    pub config_fingerprint: Option<String>,
    pub d_z: usize,
    pub trajectories: Vec<LatentEntry>,
}

/// Stores latents as `float32`; encoder outputs are `f32`, so this is lossless
/// for encoded data.
pub fn save_latents(latents: &[LatentTrajectory], path: &Path, fingerprint: Option<&str>) -> Result<()> {
    let d_z = latents
        .first()
        .map(|l| l.d_z)
        .ok_or_else(|| Error::config("latents", "nothing to save"))?;
    write_dir_atomic(path, |dir| {
        let mut entries = Vec::with_capacity(latents.len());
        for (i, l) in latents.iter().enumerate() {
            if l.d_z != d_z {
                return Err(Error::Shape(format!("latent {i} has d_z = {} instead of {d_z}", l.d_z)));
            }
            let array = ArrayEntry::f32(&format!("latent_{i:05}"), vec![l.len(), d_z]);
            let data: Vec<f32> = l.values.iter().map(|&v| v as f32).collect();
            write_array(dir, &array, &data)?;
            entries.push(LatentEntry {
                source: l.source,
                test: l.test,
                times: l.times.clone(),
                array,
            });
        }
        write_manifest(
            dir,
            &LatentsManifest {
                format: LATENTS_FORMAT.into(),
                version: LATENTS_VERSION,
                config_fingerprint: fingerprint.map(str::to_string),
                d_z,
                trajectories: entries,
            },
        )
    })
}

pub fn load_latents(path: &Path) -> Result<(Vec<LatentTrajectory>, Option<String>)> {
    let m: LatentsManifest = read_manifest(path, LATENTS_FORMAT, LATENTS_VERSION)?;
    let mut out = Vec::with_capacity(m.trajectories.len());
    for e in &m.trajectories {
        if e.array.shape != [e.times.len(), m.d_z] {
            return Err(Error::Corruption {
                path: path.to_path_buf(),
                msg: format!("array {} has shape {:?}", e.array.name, e.array.shape),
            });
        }
        let data = read_array(path, &e.array)?;
        let mut l = LatentTrajectory::new(
            e.source,
            e.times.clone(),
            m.d_z,
            data.iter().map(|&v| v as f64).collect(),
        )?;
        l.test = e.test;
        out.push(l);
    }
    Ok((out, m.config_fingerprint))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub format: String,
    pub version: u32,
    pub config_fingerprint: Option<String>,
    pub trajectory: usize,
    pub resolution: usize,
    pub times: Vec<f64>,
    /// Times that coincide with a stored snapshot on the data grid.
    pub scored_times: Vec<f64>,
    /// Relative RMSE against the stored data at each of `scored_times`.
    pub rel_rmse: Vec<f64>,
    pub fields: ArrayEntry,
    pub latents: ArrayEntry,
}

pub struct PredictionArtifact<'a> {
    pub fingerprint: Option<&'a str>,
    pub trajectory: usize,
    pub resolution: usize,
    pub ndim: usize,
    pub times: &'a [f64],
    pub rel_rmse: Vec<Option<f64>>,
    pub values: &'a [f32],
    pub latents: &'a LatentTrajectory,
}

pub fn save_prediction(p: &PredictionArtifact<'_>, path: &Path) -> Result<()> {
    write_dir_atomic(path, |dir| {
        let mut shape = vec![p.times.len()];
        shape.extend(std::iter::repeat(p.resolution).take(p.ndim));
        let fields = ArrayEntry::f32("fields", shape);
        write_array(dir, &fields, p.values)?;
        let latents = ArrayEntry::f32("latents", vec![p.latents.len(), p.latents.d_z]);
        let z: Vec<f32> = p.latents.values.iter().map(|&v| v as f32).collect();
        write_array(dir, &latents, &z)?;
        let scored: Vec<(f64, f64)> = p
            .times
            .iter()
            .zip(&p.rel_rmse)
            .filter_map(|(&t, r)| r.map(|r| (t, r)))
            .collect();
        write_manifest(
            dir,
            &PredictionManifest {
                format: PREDICTION_FORMAT.into(),
                version: PREDICTION_VERSION,
                config_fingerprint: p.fingerprint.map(str::to_string),
                trajectory: p.trajectory,
                resolution: p.resolution,
                times: p.times.to_vec(),
                scored_times: scored.iter().map(|&(t, _)| t).collect(),
                rel_rmse: scored.iter().map(|&(_, r)| r).collect(),
                fields,
                latents,
            },
        )
    })
}
