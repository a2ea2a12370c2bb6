//! Adam, learning-rate schedules, gradient clipping and epoch shuffling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nets::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the run.
    #[default]
    Cosine,
}

impl Schedule {
    pub fn rate(self, base: f64, iter: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => {
                let p = iter as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * p.min(1.0)).cos())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: ParamSet<f32>,
    v: ParamSet<f32>,
}

impl Adam {
    pub fn new(params: &ParamSet<f32>) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet<f32>, grads: &ParamSet<f32>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (((p, g), m), v) in params
            .blocks
            .iter_mut()
            .zip(&grads.blocks)
            .zip(&mut self.m.blocks)
            .zip(&mut self.v.blocks)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                p.data[i] -= step * m.data[i] / (v.data[i].sqrt() + eps);
            }
        }
    }
}

/// Scales `grads` so their joint norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut ParamSet<f32>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}

/// Reshuffles `0..n` at the start of every epoch and cuts it into batches.
pub struct Shuffler {
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl Shuffler {
    pub fn new(n: usize, seed: u64) -> Self {
        Shuffler {
            order: (0..n).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Batches of one epoch; together they hold every index exactly once.
    pub fn epoch(&mut self, batch_size: usize) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn every_index_once_per_epoch(n in 1usize..200, batch in 1usize..17, seed in any::<u64>()) {
            let mut sh = Shuffler::new(n, seed);
            for _ in 0..3 {
                let batches = sh.epoch(batch);
                let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
                prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
                prop_assert_eq!(batches.len(), n.div_ceil(batch));
            }
        }
    }

    #[test]
    fn epochs_differ_but_replay_per_seed() {
        let mut a = Shuffler::new(50, 3);
        let mut b = Shuffler::new(50, 3);
        let (a1, a2) = (a.epoch(8), a.epoch(8));
        assert_ne!(a1, a2);
        assert_eq!(a1, b.epoch(8));
        assert_eq!(a2, b.epoch(8));
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(Schedule::Cosine.rate(1e-3, 0, 100), 1e-3);
        assert!(Schedule::Cosine.rate(1e-3, 100, 100).abs() < 1e-18);
        assert!((Schedule::Cosine.rate(1e-3, 50, 100) - 5e-4).abs() < 1e-15);
        assert_eq!(Schedule::Constant.rate(2e-3, 70, 100), 2e-3);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = ParamSet::new();
        p.push("x", vec![2], vec![3.0f32, -2.0]);
        let mut opt = Adam::new(&p);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            for i in 0..2 {
                g.blocks[0].data[i] = 2.0 * p.blocks[0].data[i];
            }
            opt.step(&mut p, &g, 1e-2);
        }
        assert!(p.blocks[0].data.iter().all(|v| v.abs() < 1e-2));
        assert_eq!(opt.steps(), 2000);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut a = ParamSet::new();
        a.push("a", vec![2], vec![3.0f32, 4.0]);
        let mut b = ParamSet::new();
        b.push("b", vec![1], vec![0.0f32]);
        let n = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert!((n - 5.0).abs() < 1e-6);
        assert!((a.sq_norm().sqrt() - 1.0).abs() < 1e-6);
    }
}
