//! Dense and convolutional layers with hand-written backward passes.
//!
//! Layers hold indices into a [`ParamSet`]; the same layer description works
//! for any scalar type.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::real::{gemm, Op, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    Sine,
    Relu,
}

impl Activation {
    /// `out = act(omega * pre)` for sine, `act(pre)` otherwise.
    pub fn apply<T: Real>(self, omega: T, pre: &[T], out: &mut [T]) {
        match self {
            Activation::Silu => {
                for (o, &a) in out.iter_mut().zip(pre) {
                    *o = a * T::sigmoid(a);
                }
            }
            Activation::Sine => {
                for (o, &a) in out.iter_mut().zip(pre) {
                    *o = (omega * a).sin();
                }
            }
            Activation::Relu => {
                for (o, &a) in out.iter_mut().zip(pre) {
                    *o = if a > T::zero() { a } else { T::zero() };
                }
            }
        }
    }

    /// Multiplies `grad` in place by the derivative evaluated at `pre`.
    pub fn backward<T: Real>(self, omega: T, pre: &[T], grad: &mut [T]) {
        match self {
            Activation::Silu => {
                for (g, &a) in grad.iter_mut().zip(pre) {
                    let s = T::sigmoid(a);
                    *g *= s * (T::one() + a * (T::one() - s));
                }
            }
            Activation::Sine => {
                for (g, &a) in grad.iter_mut().zip(pre) {
                    *g *= omega * (omega * a).cos();
                }
            }
            Activation::Relu => {
                for (g, &a) in grad.iter_mut().zip(pre) {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
        }
    }
}

/// Weight initialization rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `N(0, 2 / fan_in)`.
    KaimingNormal,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanInUniform,
    /// `U(-bound, bound)`.
    Uniform(f64),
    Zeros,
}

impl Init {
    pub fn sample<T: Real, R: Rng>(self, fan_in: usize, n: usize, rng: &mut R) -> Vec<T> {
        match self {
            Init::KaimingNormal => {
                let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
                (0..n).map(|_| T::lit(d.sample(rng))).collect()
            }
            Init::FanInUniform => Init::Uniform(1.0 / (fan_in as f64).sqrt()).sample(fan_in, n, rng),
            Init::Uniform(b) => {
                let d = Uniform::new_inclusive(-b, b);
                (0..n).map(|_| T::lit(d.sample(rng))).collect()
            }
            Init::Zeros => vec![T::zero(); n],
        }
    }
}

/// `y = x W^T + b` on row-major `rows x fan_in` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn register<T: Real, R: Rng>(
        ps: &mut ParamSet<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        w_init: Init,
        b_init: Init,
        rng: &mut R,
    ) -> Linear {
        let w = ps.push(
            format!("{name}.weight"),
            vec![fan_out, fan_in],
            w_init.sample(fan_in, fan_in * fan_out, rng),
        );
        let b = ps.push(format!("{name}.bias"), vec![fan_out], b_init.sample(fan_in, fan_out, rng));
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T], rows: usize) -> Vec<T> {
        let bias = ps.get(self.b);
        let mut y = Vec::with_capacity(rows * self.fan_out);
        for _ in 0..rows {
            y.extend_from_slice(bias);
        }
        gemm(Op::N, Op::T, rows, self.fan_out, self.fan_in, T::one(), x, ps.get(self.w), T::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients into `grads`; returns `dL/dx` if asked.
    pub fn backward<T: Real>(
        &self,
        ps: &ParamSet<T>,
        x: &[T],
        dy: &[T],
        rows: usize,
        grads: &mut ParamSet<T>,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        gemm(
            Op::T,
            Op::N,
            self.fan_out,
            self.fan_in,
            rows,
            T::one(),
            dy,
            x,
            T::one(),
            grads.get_mut(self.w),
        );
        let db = grads.get_mut(self.b);
        for r in 0..rows {
            for (g, &d) in db.iter_mut().zip(&dy[r * self.fan_out..(r + 1) * self.fan_out]) {
                *g += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); rows * self.fan_in];
            gemm(Op::N, Op::N, rows, self.fan_in, self.fan_out, T::one(), dy, ps.get(self.w), T::zero(), &mut dx);
            dx
        })
    }
}

/// Spatial layout of a batch of feature maps: `[channel][batch][h][w]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MapShape {
    pub channels: usize,
    pub batch: usize,
    pub h: usize,
    pub w: usize,
}

impl MapShape {
    pub fn plane(&self) -> usize {
        self.batch * self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.channels * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 2D convolution with circular (periodic) padding and "same" output size
/// divided by the stride.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Real, R: Rng>(
        ps: &mut ParamSet<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        init: Init,
        rng: &mut R,
    ) -> Conv2d {
        let fan_in = cin * kernel.0 * kernel.1;
        let w = ps.push(
            format!("{name}.weight"),
            vec![cout, cin, kernel.0, kernel.1],
            init.sample(fan_in, fan_in * cout, rng),
        );
        let b = ps.push(format!("{name}.bias"), vec![cout], vec![T::zero(); cout]);
        Conv2d {
            w,
            b,
            cin,
            cout,
            kh: kernel.0,
            kw: kernel.1,
            sh: stride.0,
            sw: stride.1,
        }
    }

    pub fn out_shape(&self, s: MapShape) -> MapShape {
        MapShape {
            channels: self.cout,
            batch: s.batch,
            h: s.h / self.sh,
            w: s.w / self.sw,
        }
    }

    fn rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1
    }

    fn im2col<T: Real>(&self, x: &[T], s: MapShape) -> Vec<T> {
        let o = self.out_shape(s);
        let p = o.plane();
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let mut cols = vec![T::zero(); self.rows() * p];
        let col_idx: Vec<Vec<usize>> = (0..self.kw)
            .map(|dx| (0..o.w).map(|wo| (wo * self.sw + dx + s.w - pw) % s.w).collect())
            .collect();
        for c in 0..self.cin {
            for dy in 0..self.kh {
                for dx in 0..self.kw {
                    let r = (c * self.kh + dy) * self.kw + dx;
                    let dst = &mut cols[r * p..(r + 1) * p];
                    let ix = &col_idx[dx];
                    for b in 0..s.batch {
                        for ho in 0..o.h {
                            let iy = (ho * self.sh + dy + s.h - ph) % s.h;
                            let src = &x[c * s.plane() + (b * s.h + iy) * s.w..][..s.w];
                            let d = &mut dst[(b * o.h + ho) * o.w..][..o.w];
                            for (v, &i) in d.iter_mut().zip(ix) {
                                *v = src[i];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Real>(&self, dcols: &[T], s: MapShape) -> Vec<T> {
        let o = self.out_shape(s);
        let p = o.plane();
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let mut dx_out = vec![T::zero(); s.len()];
        for c in 0..self.cin {
            for dy in 0..self.kh {
                for dx in 0..self.kw {
                    let r = (c * self.kh + dy) * self.kw + dx;
                    let src = &dcols[r * p..(r + 1) * p];
                    for b in 0..s.batch {
                        for ho in 0..o.h {
                            let iy = (ho * self.sh + dy + s.h - ph) % s.h;
                            let base = c * s.plane() + (b * s.h + iy) * s.w;
                            let row = &src[(b * o.h + ho) * o.w..][..o.w];
                            for (wo, &g) in row.iter().enumerate() {
                                let ix = (wo * self.sw + dx + s.w - pw) % s.w;
                                dx_out[base + ix] += g;
                            }
                        }
                    }
                }
            }
        }
        dx_out
    }

    /// Returns the output maps and the unfolded input (needed for backward).
    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T], s: MapShape, keep_cols: bool) -> (Vec<T>, Option<Vec<T>>) {
        debug_assert_eq!(s.channels, self.cin);
        let o = self.out_shape(s);
        let p = o.plane();
        let cols = if self.is_pointwise() { x.to_vec() } else { self.im2col(x, s) };
        let bias = ps.get(self.b);
        let mut y = vec![T::zero(); o.len()];
        for (c, chunk) in y.chunks_mut(p).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[c]);
        }
        gemm(Op::N, Op::N, self.cout, p, self.rows(), T::one(), ps.get(self.w), &cols, T::one(), &mut y);
        (y, keep_cols.then_some(cols))
    }

    pub fn backward<T: Real>(
        &self,
        ps: &ParamSet<T>,
        cols: &[T],
        dy: &[T],
        s: MapShape,
        grads: &mut ParamSet<T>,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let o = self.out_shape(s);
        let p = o.plane();
        let r = self.rows();
        gemm(Op::N, Op::T, self.cout, r, p, T::one(), dy, cols, T::one(), grads.get_mut(self.w));
        let db = grads.get_mut(self.b);
        for (c, chunk) in dy.chunks(p).enumerate() {
            db[c] += chunk.iter().copied().sum::<T>();
        }
        want_dx.then(|| {
            let mut dcols = vec![T::zero(); r * p];
            gemm(Op::T, Op::N, r, p, self.cout, T::one(), ps.get(self.w), dy, T::zero(), &mut dcols);
            if self.is_pointwise() {
                dcols
            } else {
                self.col2im(&dcols, s)
            }
        })
    }
}
