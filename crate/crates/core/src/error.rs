use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An invalid parameter or inconsistent configuration. Carries the offending key.
    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("solver blow-up at step {step} (t = {time}): non-finite state")]
    SolverBlowup { step: usize, time: f64 },

    #[error("integrator blow-up: non-finite latent state after t = {last_finite_time}")]
    IntegratorBlowup { last_finite_time: f64 },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("corrupt container {path}: {msg}")]
    Corruption { path: PathBuf, msg: String },

    #[error("unsupported container version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("missing inputs: {}", .0.join(", "))]
    MissingInputs(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("gradient mismatch in `{block}`: relative error {rel_err:.3e} exceeds {tolerance:.1e}")]
    GradientMismatch { block: String, rel_err: f64, tolerance: f64 },

    #[error("plot export failed: {0}")]
    Plot(String),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
