//! Gaussian random field initial conditions with covariance
//! `sigma * (-Laplacian + tau^2 I)^(-alpha)` on the periodic unit square.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::Fft2;
use super::grid::{freq, GridSpec};
use crate::datastore::FieldSnapshot;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    /// Overall scale; `7^{3/2}` by default.
    pub sigma: f64,
    /// Shift of the operator, `tau^2 I`.
    pub tau: f64,
    /// Exponent of the inverse operator.
    pub alpha: f64,
    pub seed: u64,
}

impl GrfSpec {
    pub fn with_seed(seed: u64) -> Self {
        GrfSpec {
            seed,
            ..Default::default()
        }
    }

    /// Variance of the Fourier coefficient of mode `(k1, k2)`.
    pub fn mode_variance(&self, k1: i64, k2: i64) -> f64 {
        let k2norm = (k1 * k1 + k2 * k2) as f64;
        self.sigma * (4.0 * PI * PI * k2norm + self.tau * self.tau).powf(-self.alpha)
    }
}

impl Default for GrfSpec {
    fn default() -> Self {
        GrfSpec {
            sigma: 7f64.powf(1.5),
            tau: 7.0,
            alpha: 2.5,
            seed: 0,
        }
    }
}

/// Fourier coefficients `c_k` of a sample, so that `w(x) = sum_k c_k e^{2 pi i k.x}`.
/// Returned in FFT bin order, `n * n` entries, Hermitian-symmetric.
pub fn sample_coefficients(n: usize, spec: &GrfSpec, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut coef = vec![Complex64::default(); n * n];
    let mut filled = vec![false; n * n];
    let conj_idx = |i: usize, j: usize| ((n - i) % n) * n + (n - j) % n;
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            if filled[idx] {
                continue;
            }
            let var = spec.mode_variance(freq(i, n), freq(j, n));
            let cidx = conj_idx(i, j);
            if cidx == idx {
                let g: f64 = StandardNormal.sample(rng);
                coef[idx] = Complex64::new(var.sqrt() * g, 0.0);
            } else {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                let s = (var / 2.0).sqrt();
                coef[idx] = Complex64::new(s * a, s * b);
                coef[cidx] = coef[idx].conj();
                filled[cidx] = true;
            }
            filled[idx] = true;
        }
    }
    coef
}

/// Draws one initial vorticity field on a 2D periodic grid.
pub fn sample_initial_vorticity(grid: &GridSpec, spec: &GrfSpec) -> Result<FieldSnapshot> {
    grid.validate()?;
    if grid.ndim != 2 {
        return Err(Error::config("ndim", "initial vorticity requires a 2D grid"));
    }
    let n = grid.nx;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coef = sample_coefficients(n, spec, &mut rng);
    Fft2::new(n).inverse(&mut coef);
    Ok(FieldSnapshot {
        values: coef.iter().map(|c| c.re as f32).collect(),
        shape: grid.shape(),
        time: 0.0,
    })
}
