//! Desk-scale experiment presets and the full two-stage pipeline.

use serde::{Deserialize, Serialize};

use crate::datastore::DatasetBundle;
use crate::error::Result;
use crate::infer::{evaluate_rollout, EvalOptions, EvalReport};
use crate::nets::{init_model, ArchConfig, DecoderConfig, EncoderConfig, ModelState, OdeFuncConfig};
use crate::pdegen::{build_dataset, generate_ns_corpus, GridSpec, GrfSpec, NsCorpusSpec, NsParams, SplitSpec};
use crate::train::{encode_dataset, train_stage1, train_stage2, LossHistory, Stage2History, TrainConfig};

/// Desk-scale vorticity corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskData {
    pub nx: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub burn_in: usize,
    pub train_len: usize,
    pub extrap_len: usize,
    pub seed: u64,
    pub supersample: bool,
    pub workers: usize,
}

impl Default for DeskData {
    fn default() -> Self {
        DeskData {
            nx: 32,
            n_train: 64,
            n_test: 16,
            burn_in: 10,
            train_len: 30,
            extrap_len: 10,
            seed: 0,
            supersample: true,
            workers: 1,
        }
    }
}

impl DeskData {
    pub fn corpus_spec(&self) -> Result<NsCorpusSpec> {
        Ok(NsCorpusSpec {
            grid: GridSpec::square(self.nx)?,
            params: NsParams {
                snapshots: self.burn_in + self.train_len + self.extrap_len,
                ..Default::default()
            },
            grf: GrfSpec::with_seed(self.seed),
            n_traj: self.n_train + self.n_test,
            supersample: self.supersample,
            workers: self.workers,
        })
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            burn_in: self.burn_in,
            train_len: Some(self.train_len),
            extrap_len: self.extrap_len,
            n_train: self.n_train,
        }
    }

    pub fn generate(&self) -> Result<DatasetBundle> {
        let spec = self.corpus_spec()?;
        let trajs = generate_ns_corpus(&spec)?;
        build_dataset(trajs, spec.grid, &self.split())
    }
}

/// Small networks that train in minutes on one core.
pub fn desk_arch(nx: usize, d_z: usize) -> ArchConfig {
    ArchConfig {
        encoder: EncoderConfig {
            nx,
            widths: vec![8, 16, 32, 64],
            blocks: 4,
            stem_stride: 2,
            d_z,
            ..Default::default()
        },
        decoder: DecoderConfig {
            hidden_layers: 3,
            width: 64,
            fourier_freqs: 4,
            d_z,
            ..Default::default()
        },
        odefunc: OdeFuncConfig {
            hidden_layers: 3,
            width: 64,
            d_z,
            ..Default::default()
        },
    }
}

/// Training schedule matching [`desk_arch`].
pub fn desk_train(lambda: f64, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        lambda,
        seed,
        ..Default::default()
    };
    cfg.stage1.epochs = 10;
    cfg.stage1.batch_size = 8;
    cfg.stage2.epochs = 100;
    cfg.stage2.batch_size = 8;
    cfg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub stage1: LossHistory,
    pub stage2: Stage2History,
    pub report: EvalReport,
}

/// Stage I, latent extraction, stage II, and rollout evaluation.
pub fn run_pipeline(
    bundle: &DatasetBundle,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    eval: &EvalOptions,
) -> Result<(ModelState, PipelineOutcome)> {
    let model = init_model(&arch.encoder, &arch.decoder, &arch.odefunc, cfg.seed)?;
    let (mut model, stage1) = train_stage1(bundle, model, cfg)?;
    let latents = encode_dataset(&model, bundle, true)?;
    let (odefunc, stage2) = train_stage2(&latents, model.odefunc.clone(), cfg)?;
    model.odefunc = odefunc;
    let report = evaluate_rollout(&model, bundle, eval)?;
    Ok((model, PipelineOutcome { stage1, stage2, report }))
}
