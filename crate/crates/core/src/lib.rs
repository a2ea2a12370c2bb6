//! Reduced-order forecasting of PDE solutions with a jerk-regularized
//! autoencoder and a latent neural ODE.

pub mod cli;
pub mod datastore;
pub mod error;
pub mod experiment;
pub mod infer;
pub mod losses;
pub mod nets;
pub mod pdegen;
pub mod real;
pub mod train;

pub use error::{Error, Result};
