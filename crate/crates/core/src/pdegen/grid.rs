use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on the unit interval or unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ndim: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ndim: usize) -> Result<Self> {
        let g = GridSpec { nx, ndim };
        g.validate()?;
        Ok(g)
    }

    pub fn square(nx: usize) -> Result<Self> {
        Self::new(nx, 2)
    }

    pub fn line(nx: usize) -> Result<Self> {
        Self::new(nx, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || !self.nx.is_power_of_two() {
            return Err(Error::config(
                "nx",
                format!("grid size must be a power of two >= 8, got {}", self.nx),
            ));
        }
        if self.ndim != 1 && self.ndim != 2 {
            return Err(Error::config(
                "ndim",
                format!("only 1 or 2 dimensions are supported, got {}", self.ndim),
            ));
        }
        Ok(())
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.nx.pow(self.ndim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Array shape of one snapshot on this grid.
    pub fn shape(&self) -> Vec<usize> {
        vec![self.nx; self.ndim]
    }

    /// Flattened point coordinates (`ndim` values per point, row-major
    /// point order), `x_i = i / nx`.
    pub fn coords(&self) -> Vec<f64> {
        uniform_coords(self.nx, self.ndim)
    }
}

/// Coordinates of a uniform `n^ndim` lattice on the unit cell.
pub fn uniform_coords(n: usize, ndim: usize) -> Vec<f64> {
    let step = |i: usize| i as f64 / n as f64;
    match ndim {
        1 => (0..n).map(step).collect(),
        _ => {
            let mut out = Vec::with_capacity(2 * n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push(step(i));
                    out.push(step(j));
                }
            }
            out
        }
    }
}

/// Signed integer frequency of FFT bin `i` on an `n`-point axis.
pub fn freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
