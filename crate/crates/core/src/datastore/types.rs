use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdegen::GridSpec;

/// One scalar field on the grid at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub values: Vec<f32>,
    pub shape: Vec<usize>,
    pub time: f64,
}

impl FieldSnapshot {
    pub fn new(values: Vec<f32>, shape: Vec<usize>, time: f64) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!("{} values for shape {shape:?}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("values", "snapshot contains non-finite values"));
        }
        Ok(FieldSnapshot { values, shape, time })
    }
}

/// Equally spaced snapshots of one run, stored contiguously
/// (`len() x points` row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub data: Vec<f32>,
    pub shape: Vec<usize>,
    pub t0: f64,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(data: Vec<f32>, shape: Vec<usize>, t0: f64, dt: f64) -> Result<Self> {
        let npts: usize = shape.iter().product();
        if npts == 0 || data.len() % npts != 0 {
            return Err(Error::Shape(format!(
                "{} values are not a whole number of {shape:?} snapshots",
                data.len()
            )));
        }
        if data.len() / npts < 4 {
            return Err(Error::config("snapshots", "a trajectory needs at least 4 snapshots"));
        }
        if !(dt > 0.0) {
            return Err(Error::config("dt", "snapshot spacing must be positive"));
        }
        Ok(Trajectory { data, shape, t0, dt })
    }

    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.points()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn snapshot(&self, i: usize) -> &[f32] {
        let n = self.points();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn to_snapshot(&self, i: usize) -> FieldSnapshot {
        FieldSnapshot {
            values: self.snapshot(i).to_vec(),
            shape: self.shape.clone(),
            time: self.time(i),
        }
    }

    /// Sub-trajectory of `len` snapshots starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Trajectory> {
        if start + len > self.len() {
            return Err(Error::config(
                "window",
                format!("window {start}..{} outside trajectory of {}", start + len, self.len()),
            ));
        }
        let n = self.points();
        Trajectory::new(
            self.data[start * n..(start + len) * n].to_vec(),
            self.shape.clone(),
            self.time(start),
            self.dt,
        )
    }
}

/// Global scalar normalization statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub mean: f64,
    pub std: f64,
}

impl Default for Norm {
    fn default() -> Self {
        Norm { mean: 0.0, std: 1.0 }
    }
}

impl Norm {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::config("norm.std", format!("std must be positive and finite, got {std}")));
        }
        Ok(Norm { mean, std })
    }

    /// Population mean and standard deviation over the training trajectories'
    /// training window.
    pub fn from_training(trajectories: &[Trajectory], splits: &Splits) -> Result<Self> {
        let w = splits.train_window;
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for &i in &splits.train {
            for s in w.start..w.start + w.len {
                sum += trajectories[i].snapshot(s).iter().map(|&v| v as f64).sum::<f64>();
                count += trajectories[i].points();
            }
        }
        if count == 0 {
            return Err(Error::config("splits.train", "empty training split"));
        }
        let mean = sum / count as f64;
        let mut var = 0.0f64;
        for &i in &splits.train {
            for s in w.start..w.start + w.len {
                var += trajectories[i]
                    .snapshot(s)
                    .iter()
                    .map(|&v| (v as f64 - mean).powi(2))
                    .sum::<f64>();
            }
        }
        Norm::new(mean, (var / count as f64).sqrt())
    }

    pub fn apply(&self, v: f32) -> f32 {
        ((v as f64 - self.mean) / self.std) as f32
    }

    pub fn invert(&self, v: f32) -> f32 {
        (v as f64 * self.std + self.mean) as f32
    }

    pub fn apply_slice(&self, v: &[f32]) -> Vec<f32> {
        v.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, v: &[f32]) -> Vec<f32> {
        v.iter().map(|&x| self.invert(x)).collect()
    }
}

pub fn normalize(field: &FieldSnapshot, norm: &Norm) -> Result<FieldSnapshot> {
    Norm::new(norm.mean, norm.std)?;
    Ok(FieldSnapshot {
        values: norm.apply_slice(&field.values),
        shape: field.shape.clone(),
        time: field.time,
    })
}

pub fn denormalize(field: &FieldSnapshot, norm: &Norm) -> Result<FieldSnapshot> {
    Norm::new(norm.mean, norm.std)?;
    Ok(FieldSnapshot {
        values: norm.invert_slice(&field.values),
        shape: field.shape.clone(),
        time: field.time,
    })
}

/// Half-open snapshot index range `start..start + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Snapshots removed from the front of every raw trajectory.
    pub burn_in: usize,
    pub train_window: Window,
    pub extrap_window: Window,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub grid: GridSpec,
    pub trajectories: Vec<Trajectory>,
    pub norm: Norm,
    pub splits: Splits,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.trajectories.len();
        let mut seen = vec![false; n];
        for &i in self.splits.train.iter().chain(&self.splits.test) {
            if i >= n {
                return Err(Error::config("splits", format!("trajectory index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::config("splits", format!("trajectory {i} listed twice")));
            }
            seen[i] = true;
        }
        let end = self.splits.extrap_window.start + self.splits.extrap_window.len;
        let end = end.max(self.splits.train_window.start + self.splits.train_window.len);
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.shape != self.grid.shape() {
                return Err(Error::Shape(format!("trajectory {i} shape {:?}", t.shape)));
            }
            if t.len() < end {
                return Err(Error::config("splits", format!("trajectory {i} shorter than its windows")));
            }
        }
        Norm::new(self.norm.mean, self.norm.std)?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.trajectories.first().map_or(1.0, |t| t.dt)
    }

    /// Statistics recomputed from the stored training portion.
    pub fn recompute_norm(&self) -> Result<Norm> {
        Norm::from_training(&self.trajectories, &self.splits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_norm() {
        let f = FieldSnapshot::new(vec![1.5, -2.0, 0.25, 7.0], vec![2, 2], 0.0).unwrap();
        let n = normalize(&f, &Norm::default()).unwrap();
        assert_eq!(n.values, f.values);
    }

    #[test]
    fn mean_maps_to_zero() {
        let norm = Norm::new(3.25, 2.0).unwrap();
        assert_eq!(norm.apply(3.25), 0.0);
    }

    #[test]
    fn zero_std_is_rejected() {
        assert!(matches!(Norm::new(0.0, 0.0), Err(Error::Config { .. })));
        let f = FieldSnapshot::new(vec![1.0; 4], vec![2, 2], 0.0).unwrap();
        assert!(normalize(&f, &Norm { mean: 0.0, std: 0.0 }).is_err());
    }

    #[test]
    fn training_statistics_standardize_training_data() {
        let mut data = Vec::new();
        for i in 0..(6 * 64) {
            data.push(((i as f32) * 0.731).sin() * 3.0 + 1.7);
        }
        let t = Trajectory::new(data, vec![8, 8], 0.0, 1.0).unwrap();
        let splits = Splits {
            train: vec![0],
            test: vec![],
            burn_in: 0,
            train_window: Window { start: 0, len: 6 },
            extrap_window: Window { start: 6, len: 0 },
        };
        let norm = Norm::from_training(std::slice::from_ref(&t), &splits).unwrap();
        let z: Vec<f64> = norm.apply_slice(&t.data).iter().map(|&v| v as f64).collect();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        let s = (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        assert!(m.abs() < 1e-5, "mean {m}");
        assert!((s - 1.0).abs() < 1e-4, "std {s}");
    }

    #[test]
    fn short_trajectories_are_rejected() {
        assert!(Trajectory::new(vec![0.0; 3 * 4], vec![2, 2], 0.0, 1.0).is_err());
        assert!(Trajectory::new(vec![0.0; 5], vec![2, 2], 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(
            vals in proptest::collection::vec(-50.0f32..50.0, 4),
            mean in -5.0f64..5.0,
            std in 0.1f64..10.0,
        ) {
            let norm = Norm::new(mean, std).unwrap();
            let f = FieldSnapshot::new(vals.clone(), vec![2, 2], 0.0).unwrap();
            let back = denormalize(&normalize(&f, &norm).unwrap(), &norm).unwrap();
            for (a, b) in back.values.iter().zip(&vals) {
                prop_assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0) * std as f32);
            }
        }
    }
}
