//! Stage-I sweep over jerk coefficients with shared seed and data.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::stage1::{stage1_metrics, train_stage1};
use crate::datastore::DatasetBundle;
use crate::error::{Error, Result};
use crate::nets::{init_model, ArchConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub test_recon_mse: f64,
    pub test_jerk: f64,
    /// Set when this run failed; the metrics are then NaN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Trains stage I once per coefficient. Failed runs are recorded in their
/// row and the sweep continues.
pub fn sweep_lambda(bundle: &DatasetBundle, lambdas: &[f64], arch: &ArchConfig, cfg: &TrainConfig) -> Result<Vec<SweepRow>> {
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l >= 0.0)) {
        return Err(Error::config("lambdas", format!("jerk coefficients must be >= 0, got {bad}")));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let run = || -> Result<(f64, f64)> {
            let model = init_model(&arch.encoder, &arch.decoder, &arch.odefunc, cfg.seed)?;
            let c = TrainConfig { lambda, ..cfg.clone() };
            let (model, _) = train_stage1(bundle, model, &c)?;
            stage1_metrics(&model, bundle, &bundle.splits.test, bundle.splits.train_window)
        };
        rows.push(match run() {
            Ok((test_recon_mse, test_jerk)) => SweepRow {
                lambda,
                test_recon_mse,
                test_jerk,
                error: None,
            },
            Err(e) => SweepRow {
                lambda,
                test_recon_mse: f64::NAN,
                test_jerk: f64::NAN,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(rows)
}
