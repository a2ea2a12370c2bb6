//! Closed-form 1D advection-diffusion corpus for fast tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::datastore::Trajectory;
use crate::error::{Error, Result};

/// `u(x, t) = A exp(-nu k^2 t) sin(k (x - c t) + phi)` with `k = 2 pi * mode`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyWaveParams {
    pub mode: u32,
    pub speed: f64,
    pub nu: f64,
    pub dt: f64,
    pub snapshots: usize,
    pub amplitude_range: (f64, f64),
}

impl Default for ToyWaveParams {
    fn default() -> Self {
        ToyWaveParams {
            mode: 1,
            speed: 0.05,
            nu: 1e-3,
            dt: 1.0,
            snapshots: 20,
            amplitude_range: (0.5, 1.5),
        }
    }
}

impl ToyWaveParams {
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.mode as f64
    }

    pub fn eval(&self, amplitude: f64, phase: f64, x: f64, t: f64) -> f64 {
        let k = self.wavenumber();
        amplitude * (-self.nu * k * k * t).exp() * (k * (x - self.speed * t) + phase).sin()
    }
}

/// One trajectory with explicit amplitude and phase.
pub fn toy_wave_trajectory(grid: &GridSpec, params: &ToyWaveParams, amplitude: f64, phase: f64) -> Result<Trajectory> {
    let mut data = Vec::with_capacity(params.snapshots * grid.nx);
    for s in 0..params.snapshots {
        let t = s as f64 * params.dt;
        for i in 0..grid.nx {
            let x = i as f64 / grid.nx as f64;
            data.push(params.eval(amplitude, phase, x, t) as f32);
        }
    }
    Trajectory::new(data, grid.shape(), 0.0, params.dt)
}

/// `n_traj` trajectories with amplitude and phase drawn from `seed`.
/// Returns the trajectories and their `(amplitude, phase)` pairs.
pub fn generate_toy_wave(
    grid: &GridSpec,
    n_traj: usize,
    seed: u64,
    params: &ToyWaveParams,
) -> Result<(Vec<Trajectory>, Vec<(f64, f64)>)> {
    grid.validate()?;
    if grid.ndim != 1 {
        return Err(Error::config("ndim", "the toy wave corpus is one-dimensional"));
    }
    if params.snapshots < 4 || !(params.dt > 0.0) {
        return Err(Error::config("snapshots", "need >= 4 snapshots and dt > 0"));
    }
    let (lo, hi) = params.amplitude_range;
    if !(hi > lo) {
        return Err(Error::config("amplitude_range", "empty amplitude range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_traj);
    let mut draws = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let a = rng.gen_range(lo..hi);
        let phi = rng.gen_range(0.0..2.0 * PI);
        out.push(toy_wave_trajectory(grid, params, a, phi)?);
        draws.push((a, phi));
    }
    Ok((out, draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_snapshot_is_pure_sine() {
        let g = GridSpec::line(32).unwrap();
        let p = ToyWaveParams::default();
        let tr = toy_wave_trajectory(&g, &p, 1.0, 0.0).unwrap();
        for (i, v) in tr.snapshot(0).iter().enumerate() {
            let want = (p.wavenumber() * i as f64 / 32.0).sin() as f32;
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn matches_closed_form_everywhere() {
        let g = GridSpec::line(16).unwrap();
        let p = ToyWaveParams::default();
        let (trajs, draws) = generate_toy_wave(&g, 3, 11, &p).unwrap();
        for (tr, (a, phi)) in trajs.iter().zip(draws) {
            for s in 0..tr.len() {
                for (i, v) in tr.snapshot(s).iter().enumerate() {
                    let want = p.eval(a, phi, i as f64 / 16.0, s as f64 * p.dt);
                    assert!((*v as f64 - want).abs() <= 1e-7 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let g = GridSpec::line(16).unwrap();
        let p = ToyWaveParams::default();
        let (a, _) = generate_toy_wave(&g, 10, 5, &p).unwrap();
        let (b, _) = generate_toy_wave(&g, 10, 5, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_2d_grid() {
        let g = GridSpec::square(16).unwrap();
        assert!(generate_toy_wave(&g, 1, 0, &ToyWaveParams::default()).is_err());
    }
}
