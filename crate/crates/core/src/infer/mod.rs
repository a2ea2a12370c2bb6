//! Latent integration, forecasting at arbitrary resolution, and evaluation.

mod integrate;
mod metrics;
mod rollout;

pub use integrate::{default_substep, integrate, substeps, IntegratorConfig, Method};
pub use metrics::{average_jerk, count_active_coords, default_threshold, mean_relative_rmse, relative_rmse};
pub use rollout::{
    encode_window, evaluate_rollout, integrate_latent, predict, EvalMode, EvalOptions, EvalReport, Prediction,
    QuerySpec, WindowStats,
};
