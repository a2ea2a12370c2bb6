//! Model checkpoints: every parameter block as an `f32` array plus the
//! architecture, normalization, stage tag, and training-config fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{read_array, read_manifest, write_array, write_dir_atomic, write_manifest, ArrayEntry};
use super::types::Norm;
use crate::error::{Error, Result};
use crate::nets::{init_model, ArchConfig, ModelState, ParamSet};

pub const CHECKPOINT_FORMAT: &str = "jerkrom-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Autoencoder trained; ODE function untouched.
    I,
    /// Latent ODE trained on top of a stage-I autoencoder.
    II,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub stage: Stage,
    pub config_fingerprint: Option<String>,
    pub norm: Norm,
    pub arch: ArchConfig,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub config_fingerprint: Option<String>,
    pub state: ModelState<f32>,
}

fn nets(state: &ModelState<f32>) -> [&ParamSet<f32>; 3] {
    [&state.encoder.params, &state.decoder.params, &state.odefunc.params]
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let state = &ckpt.state;
    write_dir_atomic(path, |dir| {
        let mut arrays = Vec::new();
        for ps in nets(state) {
            for b in &ps.blocks {
                let e = ArrayEntry::f32(&b.name, b.shape.clone());
                write_array(dir, &e, &b.data)?;
                arrays.push(e);
            }
        }
        write_manifest(
            dir,
            &CheckpointManifest {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                stage: ckpt.stage,
                config_fingerprint: ckpt.config_fingerprint.clone(),
                norm: state.norm,
                arch: state.arch.clone(),
                arrays,
            },
        )
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let m: CheckpointManifest = read_manifest(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)?;
    let corrupt = |msg: String| Error::Corruption {
        path: path.to_path_buf(),
        msg,
    };
    let mut state = init_model(&m.arch.encoder, &m.arch.decoder, &m.arch.odefunc, 0)
        .map_err(|e| corrupt(format!("stored architecture is invalid: {e}")))?;
    state.norm = m.norm;
    let mut entries = m.arrays.iter();
    for ps in [
        &mut state.encoder.params,
        &mut state.decoder.params,
        &mut state.odefunc.params,
    ] {
        for b in &mut ps.blocks {
            let e = entries
                .next()
                .ok_or_else(|| corrupt(format!("missing parameter array `{}`", b.name)))?;
            if e.name != b.name || e.shape != b.shape {
                return Err(corrupt(format!(
                    "array `{}` {:?} does not match parameter `{}` {:?}",
                    e.name, e.shape, b.name, b.shape
                )));
            }
            b.data = read_array(path, e)?;
        }
    }
    if let Some(extra) = entries.next() {
        return Err(corrupt(format!("unexpected array `{}`", extra.name)));
    }
    Ok(Checkpoint {
        stage: m.stage,
        config_fingerprint: m.config_fingerprint,
        state,
    })
}

/// Loads a checkpoint for a run configured with `arch` and `fingerprint`.
///
/// A latent-dimension disagreement is a shape error and any other
/// architecture difference refuses the load. A fingerprint mismatch is
/// refused unless `allow_fingerprint_mismatch` is set.
pub fn restore_checkpoint(
    path: &Path,
    arch: &ArchConfig,
    fingerprint: Option<&str>,
    allow_fingerprint_mismatch: bool,
) -> Result<Checkpoint> {
    let m: CheckpointManifest = read_manifest(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)?;
    if m.arch.d_z() != arch.d_z() {
        return Err(Error::Shape(format!(
            "checkpoint {} has d_z = {}, configuration expects d_z = {}",
            path.display(),
            m.arch.d_z(),
            arch.d_z()
        )));
    }
    if &m.arch != arch {
        return Err(Error::config(
            "model",
            format!("checkpoint {} was written for a different architecture", path.display()),
        ));
    }
    if !allow_fingerprint_mismatch {
        if let (Some(want), Some(found)) = (fingerprint, m.config_fingerprint.as_deref()) {
            if want != found {
                return Err(Error::config(
                    "fingerprint",
                    format!("checkpoint fingerprint {found} differs from configuration {want}"),
                ));
            }
        }
    }
    load_checkpoint(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{DecoderConfig, EncoderConfig, OdeFuncConfig};

    fn arch(d_z: usize) -> ArchConfig {
        ArchConfig {
            encoder: EncoderConfig {
                nx: 16,
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
                hidden_layers: 1,
                width: 8,
                d_z,
                ..Default::default()
            },
        }
    }

    fn ckpt(stage: Stage) -> Checkpoint {
        let a = arch(3);
        let mut state = init_model(&a.encoder, &a.decoder, &a.odefunc, 7).unwrap();
        state.norm = Norm::new(0.25, 1.5).unwrap();
        Checkpoint {
            stage,
            config_fingerprint: Some("abc".into()),
            state,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        let c = ckpt(Stage::II);
        save_checkpoint(&c, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), c);
    }

    #[test]
    fn stage_one_is_accepted_for_stage_two() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        save_checkpoint(&ckpt(Stage::I), &p).unwrap();
        let c = restore_checkpoint(&p, &arch(3), Some("abc"), false).unwrap();
        assert_eq!(c.stage, Stage::I);
    }

    #[test]
    fn wrong_d_z_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        save_checkpoint(&ckpt(Stage::I), &p).unwrap();
        assert!(matches!(restore_checkpoint(&p, &arch(4), None, false), Err(Error::Shape(_))));
    }

    #[test]
    fn architecture_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        save_checkpoint(&ckpt(Stage::I), &p).unwrap();
        let mut a = arch(3);
        a.decoder.width = 32;
        assert!(matches!(restore_checkpoint(&p, &a, None, false), Err(Error::Config { .. })));
    }

    #[test]
    fn fingerprint_mismatch_needs_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        save_checkpoint(&ckpt(Stage::I), &p).unwrap();
        assert!(restore_checkpoint(&p, &arch(3), Some("zzz"), false).is_err());
        assert!(restore_checkpoint(&p, &arch(3), Some("zzz"), true).is_ok());
    }
}
