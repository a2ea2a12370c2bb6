//! Analytic-oracle suite behind the `selftest` command.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::datastore::FieldSnapshot;
use crate::error::Result;
use crate::infer::{integrate, IntegratorConfig};
use crate::losses::{jerk_of_latents, stage1_backward, stage1_loss, SegmentBatch};
use crate::nets::{check_gradients, init_model_as, DecoderConfig, EncoderConfig, GradCheckOptions, OdeFuncConfig};
use crate::pdegen::{freq, sample_coefficients, simulate_ns, uniform_coords, GridSpec, GrfSpec, NsParams};

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Jerk of constant, quadratic and cubic sequences.
pub fn jerk_identities() -> Result<(bool, String)> {
    let seq = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { (0..4).map(|t| f(t as f64)).collect() };
    let constant = jerk_of_latents(&seq(&|_| 2.5), 1, 1)?;
    let quadratic = jerk_of_latents(&seq(&|t| 0.3 * t * t - 2.0 * t + 1.0), 1, 1)?;
    let cubic = jerk_of_latents(&seq(&|t| t * t * t), 1, 1)?;
    let ok = constant.abs() < 1e-12 && quadratic.abs() < 1e-12 && (cubic - 36.0).abs() < 1e-9;
    Ok((ok, format!("constant {constant:.1e} quadratic {quadratic:.1e} cubic {cubic}")))
}

/// Finite-difference checks of the reconstruction, jerk and stage-I losses
/// on a small `f64` model. Returns the largest relative error seen.
pub fn gradient_checks() -> Result<(bool, String)> {
    let d_z = 3;
    let enc = EncoderConfig {
        nx: 8,
        widths: vec![3, 4],
        blocks: 2,
        d_z,
        ..Default::default()
    };
    let dec = DecoderConfig {
        hidden_layers: 2,
        width: 12,
        fourier_freqs: 2,
        d_z,
        ..Default::default()
    };
    let ode = OdeFuncConfig {
        hidden_layers: 1,
        width: 4,
        d_z,
        ..Default::default()
    };
    let state = init_model_as::<f64>(&enc, &dec, &ode, 11)?;
    let n_params = state.num_params();
    let coords = uniform_coords(8, 2);
    let data: Vec<f64> = (0..2 * 4 * 64)
        .map(|i| {
            let (seg, t, p) = (i / 256, (i % 256) / 64, i % 64);
            let (x, y) = (coords[2 * p], coords[2 * p + 1]);
            (2.0 * PI * (x + 0.1 * t as f64)).sin() + 0.5 * (2.0 * PI * (y - 0.05 * (t * (seg + 1)) as f64)).cos()
        })
        .collect();
    let batch = SegmentBatch::from_raw(data, 2, coords, 2)?;
    let mut worst: f64 = 0.0;
    let mut ok = n_params <= 10_000;
    for (wr, wj) in [(1.0, 0.0), (0.0, 1.0), (1.0, 0.1)] {
        let rep = check_gradients(
            &state,
            |st, g| match g {
                Some(g) => stage1_backward(st, &batch, wr, wj, g).map(|l| l.total),
                None => stage1_loss(st, &batch, wj).map(|l| wr * l.recon + wj * l.jerk),
            },
            &GradCheckOptions::default(),
        )?;
        ok &= rep.passed();
        worst = worst.max(rep.max_rel_err());
    }
    Ok((ok, format!("{n_params} parameters, max relative error {worst:.2e}")))
}

/// Exponential and rotation oracles, fourth-order convergence, and split integration.
pub fn integrator_checks() -> Result<(bool, String)> {
    let decay = |z: &[f64]| Ok(z.iter().map(|v| -v).collect::<Vec<_>>());
    let rotation = |z: &[f64]| Ok(vec![-z[1], z[0]]);
    let cfg = IntegratorConfig::rk4(1e-2);
    let e = integrate(decay, &[1.0], &[1.0], &cfg, 1.0)?;
    let exp_err = (e[0] - (-1.0f64).exp()).abs();
    let r = integrate(rotation, &[1.0, 0.0], &[FRAC_PI_2], &cfg, 1.0)?;
    let rot_err = r[0].abs().max((r[1] - 1.0).abs());
    let err = |h: f64| -> Result<f64> {
        let z = integrate(decay, &[1.0], &[2.0], &IntegratorConfig::rk4(h), 1.0)?;
        Ok((z[0] - (-2.0f64).exp()).abs())
    };
    let factor = err(0.1)? / err(0.05)?;
    let d = IntegratorConfig::default();
    let one = integrate(rotation, &[1.0, 0.5], &[3.0], &d, 1.0)?;
    let half = integrate(rotation, &[1.0, 0.5], &[1.5], &d, 1.0)?;
    let two = integrate(rotation, &half, &[1.5], &d, 1.0)?;
    let split = one.iter().zip(&two).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ok = exp_err < 1e-6 && rot_err < 1e-6 && factor >= 12.0 && split < 1e-9;
    Ok((
        ok,
        format!("exp {exp_err:.1e} rotation {rot_err:.1e} halving factor {factor:.2} split {split:.1e}"),
    ))
}

/// Unforced Taylor–Green vortex on a 64x64 grid: decay by `exp(-8 pi^2 nu t)`.
pub fn taylor_green_check() -> Result<(bool, String)> {
    let n = 64;
    let grid = GridSpec::square(n)?;
    let w0: Vec<f32> = (0..n * n)
        .map(|idx| {
            let (x, y) = ((idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64);
            ((2.0 * PI * x).sin() * (2.0 * PI * y).sin()) as f32
        })
        .collect();
    let params = NsParams {
        nu: 1e-3,
        forcing: 0.0,
        snapshot_dt: 0.25,
        snapshots: 5,
        ..Default::default()
    };
    let snap = FieldSnapshot::new(w0.clone(), grid.shape(), 0.0)?;
    let traj = simulate_ns(&snap, &params, &grid)?;
    let decay = (-8.0 * PI * PI * params.nu * traj.time(4)).exp();
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in traj.snapshot(4).iter().zip(&w0) {
        let want = *b as f64 * decay;
        num += (*a as f64 - want).powi(2);
        den += want * want;
    }
    let rel = (num / den).sqrt();
    Ok((rel < 1e-3, format!("relative error {rel:.2e} at t = {}", traj.time(4))))
}

/// Empirical variance of GRF Fourier coefficients with `|k| <= 4` over 2000 samples.
pub fn grf_variance_check() -> Result<(bool, String)> {
    let n = 16;
    let samples = 2000;
    let spec = GrfSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let modes: Vec<(usize, i64, i64)> = (0..n * n)
        .map(|idx| (idx, freq(idx / n, n), freq(idx % n, n)))
        .filter(|&(_, a, b)| a * a + b * b <= 16)
        .collect();
    let mut acc = vec![0.0; modes.len()];
    for _ in 0..samples {
        let c: Vec<Complex64> = sample_coefficients(n, &spec, &mut rng);
        for (m, &(idx, _, _)) in modes.iter().enumerate() {
            acc[m] += c[idx].norm_sqr();
        }
    }
    let mut worst: f64 = 0.0;
    for (m, &(_, a, b)) in modes.iter().enumerate() {
        let want = spec.mode_variance(a, b);
        worst = worst.max((acc[m] / samples as f64 - want).abs() / want);
    }
    Ok((
        worst < 0.1,
        format!("{} modes, worst relative deviation {:.1}%", modes.len(), 100.0 * worst),
    ))
}

/// Runs every check; never panics on a failing check.
pub fn run_selftest() -> Vec<CheckOutcome> {
    vec![
        timed("jerk identities", jerk_identities),
        timed("gradient check", gradient_checks),
        timed("ode integrator", integrator_checks),
        timed("taylor-green decay", taylor_green_check),
        timed("grf spectrum", grf_variance_check),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_checks_pass() {
        assert!(jerk_identities().unwrap().0);
        assert!(integrator_checks().unwrap().0);
    }
}
