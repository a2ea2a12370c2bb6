//! Pseudo-spectral solver for the forced 2D vorticity equation
//!
//! `dw/dt + u . grad(w) = nu * lap(w) + f`, `div(u) = 0`, on the periodic unit square.
//!
//! Viscosity is treated with Crank-Nicolson, advection and forcing with Heun's
//! method (explicit trapezoid). Products are dealiased with the 2/3 rule and the
//! state itself is kept inside the retained band.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::Fft2;
use super::grid::{freq, GridSpec};
use crate::datastore::{FieldSnapshot, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsParams {
    pub nu: f64,
    /// Amplitude `a` of `f = a (sin(2 pi (x1 + x2)) + cos(2 pi (x1 + x2)))`.
    pub forcing: f64,
    /// Inner solver step.
    pub sim_dt: f64,
    /// Interval between stored snapshots.
    pub snapshot_dt: f64,
    pub snapshots: usize,
}

impl Default for NsParams {
    fn default() -> Self {
        NsParams {
            nu: 1e-3,
            forcing: 0.1,
            sim_dt: 1e-2,
            snapshot_dt: 1.0,
            snapshots: 50,
        }
    }
}

impl NsParams {
    pub fn validate(&self) -> Result<usize> {
        if !(self.nu > 0.0) {
            return Err(Error::config("nu", "viscosity must be positive"));
        }
        if !(self.sim_dt > 0.0) || !(self.snapshot_dt > 0.0) {
            return Err(Error::config("dt", "time steps must be positive"));
        }
        if self.sim_dt > self.snapshot_dt {
            return Err(Error::config("sim_dt", "solver step exceeds snapshot interval"));
        }
        let ratio = self.snapshot_dt / self.sim_dt;
        let sub = ratio.round();
        if (ratio - sub).abs() > 1e-9 * ratio {
            return Err(Error::config(
                "sim_dt",
                "snapshot interval must be an integer multiple of the solver step",
            ));
        }
        if self.snapshots < 4 {
            return Err(Error::config("snapshots", "need at least 4 snapshots"));
        }
        if !self.forcing.is_finite() {
            return Err(Error::config("forcing", "forcing amplitude must be finite"));
        }
        Ok(sub as usize)
    }
}

/// Spectral operators and work buffers for one grid size.
pub struct NsSolver {
    n: usize,
    fft: Fft2,
    kx: Vec<f64>,
    ky: Vec<f64>,
    lap: Vec<f64>,
    keep: Vec<bool>,
    forcing: Vec<Complex64>,
    buf_vel: Vec<Complex64>,
    buf_grad: Vec<Complex64>,
    buf_pred: Vec<Complex64>,
}

impl NsSolver {
    pub fn new(n: usize, forcing_amplitude: f64) -> Self {
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut lap = vec![0.0; n * n];
        let mut keep = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let (f1, f2) = (freq(i, n), freq(j, n));
                let idx = i * n + j;
                kx[idx] = 2.0 * PI * f1 as f64;
                ky[idx] = 2.0 * PI * f2 as f64;
                lap[idx] = kx[idx] * kx[idx] + ky[idx] * ky[idx];
                keep[idx] = 3 * f1.unsigned_abs() < n as u64 && 3 * f2.unsigned_abs() < n as u64;
            }
        }
        let mut fft = Fft2::new(n);
        let mut forcing: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (x1, x2) = ((idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64);
                let a = 2.0 * PI * (x1 + x2);
                Complex64::new(forcing_amplitude * (a.sin() + a.cos()), 0.0)
            })
            .collect();
        fft.forward(&mut forcing);
        let norm = 1.0 / (n * n) as f64;
        for (c, &k) in forcing.iter_mut().zip(&keep) {
            *c = if k { *c * norm } else { Complex64::default() };
        }
        NsSolver {
            n,
            fft,
            kx,
            ky,
            lap,
            keep,
            forcing,
            buf_vel: vec![Complex64::default(); n * n],
            buf_grad: vec![Complex64::default(); n * n],
            buf_pred: vec![Complex64::default(); n * n],
        }
    }

    /// Fourier coefficients of a physical field, truncated to the retained band.
    pub fn to_spectral(&mut self, field: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut c);
        let norm = 1.0 / (self.n * self.n) as f64;
        for (v, &k) in c.iter_mut().zip(&self.keep) {
            *v = if k { *v * norm } else { Complex64::default() };
        }
        c
    }

    pub fn to_physical(&mut self, coef: &[Complex64]) -> Vec<f64> {
        let mut c = coef.to_vec();
        self.fft.inverse(&mut c);
        c.iter().map(|v| v.re).collect()
    }

    /// Whether mode `idx` survives dealiasing.
    pub fn retained(&self, idx: usize) -> bool {
        self.keep[idx]
    }

    /// Explicit part of the tendency: `-(u . grad w) + f`, in spectral space.
    fn explicit_rhs(&mut self, w: &[Complex64], out: &mut [Complex64]) {
        let i = Complex64::new(0.0, 1.0);
        for idx in 0..w.len() {
            let psi = if self.lap[idx] > 0.0 { w[idx] / self.lap[idx] } else { Complex64::default() };
            // u = d(psi)/dy, v = -d(psi)/dx; both real so they share one transform.
            let u = i * self.ky[idx] * psi;
            let v = -i * self.kx[idx] * psi;
            self.buf_vel[idx] = u + i * v;
            let wx = i * self.kx[idx] * w[idx];
            let wy = i * self.ky[idx] * w[idx];
            self.buf_grad[idx] = wx + i * wy;
        }
        self.fft.inverse(&mut self.buf_vel);
        self.fft.inverse(&mut self.buf_grad);
        for idx in 0..w.len() {
            let (u, v) = (self.buf_vel[idx].re, self.buf_vel[idx].im);
            let (wx, wy) = (self.buf_grad[idx].re, self.buf_grad[idx].im);
            out[idx] = Complex64::new(u * wx + v * wy, 0.0);
        }
        self.fft.forward(out);
        let norm = 1.0 / (self.n * self.n) as f64;
        for idx in 0..w.len() {
            out[idx] = if self.keep[idx] {
                -out[idx] * norm + self.forcing[idx]
            } else {
                Complex64::default()
            };
        }
    }

    /// Advances spectral vorticity by one step of size `dt`.
    pub fn step(&mut self, w: &mut [Complex64], dt: f64, nu: f64, r0: &mut [Complex64], r1: &mut [Complex64]) {
        self.explicit_rhs(w, r0);
        let mut pred = std::mem::take(&mut self.buf_pred);
        for idx in 0..w.len() {
            let a = 0.5 * dt * nu * self.lap[idx];
            pred[idx] = ((1.0 - a) * w[idx] + dt * r0[idx]) / (1.0 + a);
        }
        self.explicit_rhs(&pred, r1);
        self.buf_pred = pred;
        for idx in 0..w.len() {
            let a = 0.5 * dt * nu * self.lap[idx];
            w[idx] = if self.keep[idx] {
                ((1.0 - a) * w[idx] + 0.5 * dt * (r0[idx] + r1[idx])) / (1.0 + a)
            } else {
                Complex64::default()
            };
        }
    }
}

/// Integrates the vorticity equation from `w0`, storing `params.snapshots`
/// snapshots spaced by `params.snapshot_dt` (the first one is the truncated `w0`).
pub fn simulate_ns(w0: &FieldSnapshot, params: &NsParams, grid: &GridSpec) -> Result<Trajectory> {
    grid.validate()?;
    if grid.ndim != 2 {
        return Err(Error::config("ndim", "the vorticity solver needs a 2D grid"));
    }
    if w0.shape != grid.shape() {
        return Err(Error::Shape(format!(
            "initial field shape {:?} does not match grid {:?}",
            w0.shape,
            grid.shape()
        )));
    }
    if w0.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("w0", "initial vorticity contains non-finite values"));
    }
    let substeps = params.validate()?;
    let n = grid.nx;
    let mut solver = NsSolver::new(n, params.forcing);
    let init: Vec<f64> = w0.values.iter().map(|&v| v as f64).collect();
    let mut w = solver.to_spectral(&init);
    let mut r0 = vec![Complex64::default(); n * n];
    let mut r1 = vec![Complex64::default(); n * n];

    let mut data = Vec::with_capacity(params.snapshots * n * n);
    data.extend(solver.to_physical(&w).iter().map(|&v| v as f32));
    let mut step = 0usize;
    for _ in 1..params.snapshots {
        for _ in 0..substeps {
            solver.step(&mut w, params.sim_dt, params.nu, &mut r0, &mut r1);
            step += 1;
            if w.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::SolverBlowup {
                    step,
                    time: step as f64 * params.sim_dt,
                });
            }
        }
        data.extend(solver.to_physical(&w).iter().map(|&v| v as f32));
    }
    Trajectory::new(data, grid.shape(), 0.0, params.snapshot_dt)
}

/// Runs the solver at twice the resolution and keeps every other grid point.
pub fn simulate_ns_decimated(w0_fine: &FieldSnapshot, params: &NsParams, grid: &GridSpec) -> Result<Trajectory> {
    let fine = GridSpec::new(grid.nx * 2, 2)?;
    let traj = simulate_ns(w0_fine, params, &fine)?;
    let (nf, nc) = (fine.nx, grid.nx);
    let mut data = Vec::with_capacity(traj.len() * nc * nc);
    for s in 0..traj.len() {
        let snap = traj.snapshot(s);
        for i in 0..nc {
            for j in 0..nc {
                data.push(snap[(2 * i) * nf + 2 * j]);
            }
        }
    }
    Trajectory::new(data, grid.shape(), traj.t0, traj.dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_green(n: usize) -> FieldSnapshot {
        let values = (0..n * n)
            .map(|idx| {
                let (x, y) = ((idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64);
                ((2.0 * PI * x).sin() * (2.0 * PI * y).sin()) as f32
            })
            .collect();
        FieldSnapshot {
            values,
            shape: vec![n, n],
            time: 0.0,
        }
    }

    #[test]
    fn zero_state_stays_zero_without_forcing() {
        let g = GridSpec::square(16).unwrap();
        let w0 = FieldSnapshot {
            values: vec![0.0; 256],
            shape: vec![16, 16],
            time: 0.0,
        };
        let p = NsParams {
            forcing: 0.0,
            snapshots: 5,
            ..Default::default()
        };
        let traj = simulate_ns(&w0, &p, &g).unwrap();
        assert_eq!(traj.len(), 5);
        assert!(traj.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn taylor_green_decays_analytically() {
        let n = 32;
        let g = GridSpec::square(n).unwrap();
        let p = NsParams {
            forcing: 0.0,
            snapshots: 4,
            ..Default::default()
        };
        let traj = simulate_ns(&taylor_green(n), &p, &g).unwrap();
        let decay = (-8.0 * PI * PI * p.nu * 3.0).exp();
        let w0 = taylor_green(n).values;
        let last = traj.snapshot(3);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for (a, b) in last.iter().zip(&w0) {
            let want = *b as f64 * decay;
            num += (*a as f64 - want).powi(2);
            den += want * want;
        }
        assert!((num / den).sqrt() < 1e-5);
    }

    #[test]
    fn rejects_misaligned_steps() {
        let p = NsParams {
            sim_dt: 0.3,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = NsParams {
            sim_dt: 2.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = NsParams {
            nu: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let n = 16;
        let g = GridSpec::square(n).unwrap();
        // Huge time step on a huge field: explicit advection goes unstable.
        let mut w0 = taylor_green(n);
        for (idx, v) in w0.values.iter_mut().enumerate() {
            *v = *v * 1e3 + ((idx * 7919) % 13) as f32 * 1e3;
        }
        let p = NsParams {
            sim_dt: 1.0,
            snapshot_dt: 1.0,
            snapshots: 200,
            ..Default::default()
        };
        match simulate_ns(&w0, &p, &g) {
            Err(Error::SolverBlowup { step, .. }) => assert!(step >= 1),
            other => panic!("expected blow-up, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn truncated_modes_carry_no_energy() {
        let n = 16;
        let g = GridSpec::square(n).unwrap();
        let w0 = crate::pdegen::sample_initial_vorticity(&g, &crate::pdegen::GrfSpec::with_seed(1)).unwrap();
        let mut solver = NsSolver::new(n, 0.1);
        let init: Vec<f64> = w0.values.iter().map(|&v| v as f64).collect();
        let mut w = solver.to_spectral(&init);
        let mut r0 = vec![Complex64::default(); n * n];
        let mut r1 = r0.clone();
        for _ in 0..5 {
            solver.step(&mut w, 0.01, 1e-3, &mut r0, &mut r1);
            for (idx, c) in w.iter().enumerate() {
                if !solver.retained(idx) {
                    assert_eq!(c.norm_sqr(), 0.0);
                }
            }
        }
        let _ = g;
    }
}
