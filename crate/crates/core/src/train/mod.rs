//! Two-stage training: autoencoder with jerk regularization, then the
//! latent vector field, plus the jerk-coefficient sweep.

mod config;
mod latent;
mod optim;
mod stage1;
mod stage2;
mod sweep;

pub use config::{Stage1Config, Stage2Config, TrainConfig};
pub use latent::encode_dataset;
pub use optim::{clip_grad_norm, Adam, Schedule, Shuffler};
pub use stage1::{
    make_segments, segments_for, stage1_iterations, stage1_metrics, train_stage1, train_stage1_logged, EpochRecord,
    IterRecord, LossHistory,
};
pub use stage2::{
    stage2_iterations, stage2_loss, train_stage2, train_stage2_logged, Stage2Epoch, Stage2History, Stage2Record,
};
pub use sweep::{sweep_lambda, SweepRow};
