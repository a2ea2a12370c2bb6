//! Ground-truth data: Gaussian random field initial conditions, the forced
//! vorticity solver, a closed-form 1D toy corpus, and dataset assembly.

mod dataset;
mod fft;
mod grf;
mod grid;
mod ns;
mod toy;

pub use dataset::{build_dataset, derive_seed, generate_ns_corpus, generate_ns_trajectory, NsCorpusSpec, SplitSpec};
pub use fft::Fft2;
pub use grf::{sample_coefficients, sample_initial_vorticity, GrfSpec};
pub use grid::{freq, uniform_coords, GridSpec};
pub use ns::{simulate_ns, simulate_ns_decimated, NsParams, NsSolver};
pub use toy::{generate_toy_wave, toy_wave_trajectory, ToyWaveParams};
