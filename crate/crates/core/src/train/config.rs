use serde::{Deserialize, Serialize};

use super::optim::Schedule;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub lr: f64,
    pub schedule: Schedule,
    /// Segments per batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_iterations: Option<usize>,
    pub clip: Option<f64>,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            lr: 1e-3,
            schedule: Schedule::Cosine,
            batch_size: 8,
            epochs: 10,
            max_iterations: None,
            clip: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub lr: f64,
    pub schedule: Schedule,
    /// Complete trajectories per batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub max_iterations: Option<usize>,
    pub clip: Option<f64>,
    /// Largest RK4 substep; `None` uses `min(dt / 10, 0.1)`.
    pub max_substep: Option<f64>,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            lr: 1e-3,
            schedule: Schedule::Constant,
            batch_size: 8,
            epochs: 100,
            max_iterations: None,
            clip: Some(1.0),
            max_substep: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Jerk coefficient.
    pub lambda: f64,
    pub seed: u64,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            seed: 0,
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::config(key, format!("must be a finite value > 0, got {v}")));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("train.lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        positive("train.stage1.lr", self.stage1.lr)?;
        positive("train.stage2.lr", self.stage2.lr)?;
        if self.stage1.batch_size == 0 {
            return Err(Error::config("train.stage1.batch_size", "must be >= 1"));
        }
        if self.stage2.batch_size == 0 {
            return Err(Error::config("train.stage2.batch_size", "must be >= 1"));
        }
        if let Some(c) = self.stage1.clip {
            positive("train.stage1.clip", c)?;
        }
        if let Some(c) = self.stage2.clip {
            positive("train.stage2.clip", c)?;
        }
        if let Some(h) = self.stage2.max_substep {
            positive("train.stage2.max_substep", h)?;
        }
        Ok(())
    }
}
