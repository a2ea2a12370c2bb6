//! Square 2D complex FFT built from row transforms.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Fft2 {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::default(); len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform, `X_k = sum_j x_j e^{-2 pi i k.j / n}`.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let f = self.fwd.clone();
        self.apply(&*f, data);
    }

    /// Unnormalized inverse transform, `x_j = sum_k X_k e^{+2 pi i k.j / n}`.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let f = self.inv.clone();
        self.apply(&*f, data);
    }

    fn apply(&mut self, f: &dyn Fft<f64>, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        f.process_with_scratch(data, &mut self.scratch);
        transpose(data, n);
        f.process_with_scratch(data, &mut self.scratch);
        transpose(data, n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}
