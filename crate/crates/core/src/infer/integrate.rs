//! Explicit ODE integrators for autonomous systems `dz/dt = f(z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a fixed maximum substep.
    #[default]
    Rk4,
    /// Dormand–Prince 5(4) with adaptive step size.
    Rk45,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Largest RK4 substep; `None` means `min(dt / 10, 0.1)` for data spacing `dt`.
    pub max_substep: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            max_substep: None,
            rtol: 1e-5,
            atol: 1e-7,
        }
    }
}

/// Default RK4 substep for data spaced `dt` apart.
pub fn default_substep(dt: f64) -> f64 {
    (dt / 10.0).min(0.1)
}

impl IntegratorConfig {
    pub fn rk4(max_substep: f64) -> Self {
        IntegratorConfig {
            max_substep: Some(max_substep),
            ..Default::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45,
            max_substep: None,
            rtol,
            atol,
        }
    }

    pub fn substep(&self, dt: f64) -> f64 {
        self.max_substep.unwrap_or_else(|| default_substep(dt))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.max_substep {
            if !(h > 0.0) {
                return Err(Error::config("eval.integrator.max_substep", "must be > 0"));
            }
        }
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(Error::config("eval.integrator.rtol", "tolerances must be > 0"));
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| !(t >= 0.0)) {
        return Err(Error::config("times", "query times must be >= 0"));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::config("times", "query times must be sorted ascending"));
    }
    Ok(())
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (v, &d) in y.iter_mut().zip(x) {
        *v += a * d;
    }
}

fn finite(z: &[f64]) -> bool {
    z.iter().all(|v| v.is_finite())
}

/// Number of equal RK4 substeps for a span, at most `h` each.
pub fn substeps(span: f64, h: f64) -> usize {
    ((span / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Integrates from `z0` at `t = 0` and returns the state at each of `times`
/// (`times.len() x d` values). A time of exactly 0 returns `z0` unchanged.
///
/// `dt_hint` is the data spacing used to pick the default RK4 substep.
pub fn integrate<F>(mut f: F, z0: &[f64], times: &[f64], cfg: &IntegratorConfig, dt_hint: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_times(times)?;
    cfg.validate()?;
    let mut out = Vec::with_capacity(times.len() * z0.len());
    let mut z = z0.to_vec();
    let mut t = 0.0;
    let mut h_adapt = None;
    for &target in times {
        if target > t {
            match cfg.method {
                Method::Rk4 => rk4_span(&mut f, &mut z, t, target, cfg.substep(dt_hint))?,
                Method::Rk45 => rk45_span(&mut f, &mut z, t, target, cfg, &mut h_adapt)?,
            }
            t = target;
        }
        out.extend_from_slice(&z);
    }
    Ok(out)
}

fn rk4_span<F>(f: &mut F, z: &mut Vec<f64>, t0: f64, t1: f64, hmax: f64) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = substeps(t1 - t0, hmax);
    let h = (t1 - t0) / n as f64;
    let mut tmp = vec![0.0; z.len()];
    for i in 0..n {
        let k1 = f(z)?;
        tmp.copy_from_slice(z);
        axpy(&mut tmp, 0.5 * h, &k1);
        let k2 = f(&tmp)?;
        tmp.copy_from_slice(z);
        axpy(&mut tmp, 0.5 * h, &k2);
        let k3 = f(&tmp)?;
        tmp.copy_from_slice(z);
        axpy(&mut tmp, h, &k3);
        let k4 = f(&tmp)?;
        for j in 0..z.len() {
            z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !finite(z) {
            return Err(Error::IntegratorBlowup {
                last_finite_time: t0 + i as f64 * h,
            });
        }
    }
    Ok(())
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (same as the last stage row).
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Embedded fourth-order weights.
const DP_BHAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rk45_span<F>(
    f: &mut F,
    z: &mut Vec<f64>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    h_state: &mut Option<f64>,
) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    debug_assert_eq!(DP_C.len(), DP_A.len());
    let d = z.len();
    let mut t = t0;
    let mut h = h_state.unwrap_or(((t1 - t0) * 0.01).max(1e-6));
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    let mut tmp = vec![0.0; d];
    let mut rejects = 0usize;
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 1_000_000 || (h < 1e-12 * t.abs().max(1.0) && !(t + h >= t1)) {
            return Err(Error::IntegratorBlowup { last_finite_time: t });
        }
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        k.clear();
        k.push(f(z)?);
        for s in 1..7 {
            tmp.copy_from_slice(z);
            for (j, kj) in k.iter().enumerate() {
                if DP_A[s][j] != 0.0 {
                    axpy(&mut tmp, step * DP_A[s][j], kj);
                }
            }
            k.push(f(&tmp)?);
        }
        let mut z5 = z.clone();
        let mut err = 0.0f64;
        for i in 0..d {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..7 {
                hi += DP_B[s] * k[s][i];
                lo += DP_BHAT[s] * k[s][i];
            }
            z5[i] += step * hi;
            let sc = cfg.atol + cfg.rtol * z[i].abs().max(z5[i].abs());
            let e = step * (hi - lo) / sc;
            err += e * e;
        }
        let err = (err / d.max(1) as f64).sqrt();
        if !finite(&z5) || !err.is_finite() {
            rejects += 1;
            if rejects > 50 || step < 1e-14 {
                return Err(Error::IntegratorBlowup { last_finite_time: t });
            }
            h = step * 0.1;
            continue;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            *z = z5;
            t = if last { t1 } else { t + step };
            rejects = 0;
            if !last || fac < 1.0 {
                h = step * fac;
            }
        } else {
            h = step * fac.min(1.0);
            rejects += 1;
            if rejects > 100 || h < 1e-14 {
                return Err(Error::IntegratorBlowup { last_finite_time: t });
            }
        }
    }
    *h_state = Some(h);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn decay(z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.iter().map(|v| -v).collect())
    }

    fn rotation(z: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-z[1], z[0]])
    }

    #[test]
    fn exponential_oracle() {
        let z = integrate(decay, &[1.0], &[1.0], &IntegratorConfig::rk4(1e-2), 1.0).unwrap();
        assert!((z[0] - (-1.0f64).exp()).abs() < 1e-6);
        let z = integrate(decay, &[1.0], &[1.0], &IntegratorConfig::rk45(1e-8, 1e-10), 1.0).unwrap();
        assert!((z[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rotation_oracle() {
        for cfg in [IntegratorConfig::rk4(1e-2), IntegratorConfig::rk45(1e-8, 1e-10)] {
            let z = integrate(rotation, &[1.0, 0.0], &[FRAC_PI_2], &cfg, 1.0).unwrap();
            assert!(z[0].abs() < 1e-6 && (z[1] - 1.0).abs() < 1e-6, "{z:?}");
        }
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let z0 = [0.1234567, -3.0];
        let z = integrate(rotation, &z0, &[0.0, 0.0], &IntegratorConfig::default(), 1.0).unwrap();
        assert_eq!(z, vec![z0[0], z0[1], z0[0], z0[1]]);
    }

    #[test]
    fn zero_field_keeps_state() {
        let zero = |z: &[f64]| Ok(vec![0.0; z.len()]);
        let z = integrate(zero, &[1.0, 2.0], &[0.5, 3.0, 7.25], &IntegratorConfig::default(), 1.0).unwrap();
        assert_eq!(z, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |h: f64| {
            let z = integrate(decay, &[1.0], &[2.0], &IntegratorConfig::rk4(h), 1.0).unwrap();
            (z[0] - (-2.0f64).exp()).abs()
        };
        for h in [0.2, 0.1, 0.05] {
            assert!(err(h) / err(h / 2.0) >= 12.0);
        }
    }

    #[test]
    fn split_integration_matches_one_shot() {
        let cfg = IntegratorConfig::default();
        let one = integrate(rotation, &[1.0, 0.5], &[3.0], &cfg, 1.0).unwrap();
        let half = integrate(rotation, &[1.0, 0.5], &[1.5], &cfg, 1.0).unwrap();
        let two = integrate(rotation, &half, &[1.5], &cfg, 1.0).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn blowup_is_reported() {
        let explode = |z: &[f64]| Ok(z.iter().map(|v| v * v * 1e3).collect());
        let r = integrate(explode, &[1.0], &[5.0], &IntegratorConfig::default(), 1.0);
        assert!(matches!(r, Err(Error::IntegratorBlowup { .. })));
        let r = integrate(explode, &[1.0], &[5.0], &IntegratorConfig::rk45(1e-5, 1e-7), 1.0);
        assert!(matches!(r, Err(Error::IntegratorBlowup { .. })));
    }

    #[test]
    fn unsorted_times_rejected() {
        assert!(integrate(decay, &[1.0], &[1.0, 0.5], &IntegratorConfig::default(), 1.0).is_err());
        assert!(integrate(decay, &[1.0], &[-1.0], &IntegratorConfig::default(), 1.0).is_err());
    }
}
