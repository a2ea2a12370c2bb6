//! Forecast and latent-space metrics.
//!
//! Average jerk uses the same per-window value as the training loss,
//! `||z3 - 3 z2 + 3 z1 - z0||^2 / d_z`, averaged over all `L - 3` windows.
//! Active-coordinate variances are population variances pooled over every
//! state of every trajectory.

use crate::error::{Error, Result};
use crate::losses::window_jerk;
use crate::nets::LatentTrajectory;

/// `||pred - truth|| / ||truth||` for one snapshot.
pub fn relative_rmse(pred: &[f32], truth: &[f32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} values, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&p, &t) in pred.iter().zip(truth) {
        let d = p as f64 - t as f64;
        num += d * d;
        den += t as f64 * t as f64;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("relative RMSE of a zero-norm truth field".into()));
    }
    Ok((num / den).sqrt())
}

/// Mean of [`relative_rmse`] over consecutive snapshots of `n_points` values.
pub fn mean_relative_rmse(pred: &[f32], truth: &[f32], n_points: usize) -> Result<f64> {
    if n_points == 0 || pred.len() != truth.len() || pred.len() % n_points != 0 {
        return Err(Error::Shape("snapshot batches differ in shape".into()));
    }
    let n = pred.len() / n_points;
    let mut acc = 0.0;
    for (p, t) in pred.chunks(n_points).zip(truth.chunks(n_points)) {
        acc += relative_rmse(p, t)?;
    }
    Ok(acc / n as f64)
}

pub fn average_jerk(traj: &LatentTrajectory) -> Result<f64> {
    let l = traj.len();
    if l < 4 {
        return Err(Error::config("trajectory", format!("average jerk needs >= 4 states, got {l}")));
    }
    let total: f64 = (0..l - 3)
        .map(|s| window_jerk([traj.state(s), traj.state(s + 1), traj.state(s + 2), traj.state(s + 3)]))
        .sum();
    Ok(total / (l - 3) as f64)
}

/// Default activity threshold for a latent dimension.
pub fn default_threshold(d_z: usize) -> f64 {
    match d_z {
        10 => 5e-5,
        32 | 64 => 1e-5,
        _ => 1e-4,
    }
}

/// Number of coordinates whose pooled variance is `>= threshold`, and all
/// per-coordinate variances.
pub fn count_active_coords(trajs: &[LatentTrajectory], threshold: f64) -> Result<(usize, Vec<f64>)> {
    if !(threshold > 0.0) {
        return Err(Error::config("threshold", "activity threshold must be > 0"));
    }
    let first = trajs
        .iter()
        .find(|t| !t.is_empty())
        .ok_or_else(|| Error::config("latents", "no latent states to count"))?;
    let d = first.d_z;
    let mut n = 0usize;
    let mut mean = vec![0.0; d];
    for t in trajs {
        if t.d_z != d {
            return Err(Error::Shape(format!("mixed latent dimensions {} and {d}", t.d_z)));
        }
        for s in t.values.chunks(d) {
            n += 1;
            for (m, &v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for t in trajs {
        for s in t.values.chunks(d) {
            for i in 0..d {
                let c = s[i] - mean[i];
                var[i] += c * c;
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    let count = var.iter().filter(|&&v| v >= threshold).count();
    Ok((count, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(values: Vec<f64>, d_z: usize) -> LatentTrajectory {
        let n = values.len() / d_z;
        LatentTrajectory::new(0, (0..n).map(|i| i as f64).collect(), d_z, values).unwrap()
    }

    #[test]
    fn relative_rmse_cases() {
        let t = [1.0f32, -2.0, 3.0];
        assert_eq!(relative_rmse(&t, &t).unwrap(), 0.0);
        assert!((relative_rmse(&[0.0; 3], &t).unwrap() - 1.0).abs() < 1e-12);
        assert!((relative_rmse(&[2.0, -4.0, 6.0], &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(relative_rmse(&t, &[0.0; 3]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn average_jerk_cases() {
        assert_eq!(average_jerk(&traj(vec![2.0; 10], 2)).unwrap(), 0.0);
        let cubic = traj((0..5).map(|t| (t as f64).powi(3)).collect(), 1);
        assert!((average_jerk(&cubic).unwrap() - 36.0).abs() < 1e-9);
        assert!(average_jerk(&traj(vec![0.0; 3], 1)).is_err());
    }

    #[test]
    fn quadratic_latents_have_zero_average_jerk() {
        let v: Vec<f64> = (0..12)
            .flat_map(|t| {
                let t = t as f64;
                [1.0 + 0.2 * t - 0.03 * t * t, -0.5 * t * t]
            })
            .collect();
        assert!(average_jerk(&traj(v, 2)).unwrap().abs() < 1e-9);
    }

    #[test]
    fn counts_known_active_coordinates() {
        let v: Vec<f64> = (0..40)
            .flat_map(|t| {
                let s = (t as f64 * 0.7).sin();
                [s, 0.5, 2.0 * s, -1.0, 0.1 * s]
            })
            .collect();
        let (n, var) = count_active_coords(&[traj(v, 5)], 1e-6).unwrap();
        assert_eq!(n, 3);
        assert_eq!(var[1], 0.0);
        let (none, _) = count_active_coords(&[traj(vec![3.0; 20], 5)], 1e-9).unwrap();
        assert_eq!(none, 0);
        assert!(count_active_coords(&[], 1e-4).is_err());
    }

    #[test]
    fn default_thresholds() {
        assert_eq!(default_threshold(8), 1e-4);
        assert_eq!(default_threshold(10), 5e-5);
        assert_eq!(default_threshold(32), 1e-5);
        assert_eq!(default_threshold(16), 1e-4);
    }

    proptest! {
        #[test]
        fn active_count_invariant_to_ordering(
            vals in prop::collection::vec(-1.0f64..1.0, 60),
            perm_seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let trajs: Vec<LatentTrajectory> = vals.chunks(20).map(|c| traj(c.to_vec(), 4)).collect();
            let (n, var) = count_active_coords(&trajs, 0.05).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            let mut order = trajs.clone();
            order.shuffle(&mut rng);
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut rng);
            let permuted: Vec<LatentTrajectory> = order.iter().map(|t| {
                let v = t.values.chunks(4).flat_map(|s| perm.iter().map(|&p| s[p]).collect::<Vec<_>>()).collect();
                traj(v, 4)
            }).collect();
            let (n2, var2) = count_active_coords(&permuted, 0.05).unwrap();
            prop_assert_eq!(n, n2);
            for (i, &p) in perm.iter().enumerate() {
                prop_assert!((var2[i] - var[p]).abs() < 1e-12);
            }
        }
    }
}
