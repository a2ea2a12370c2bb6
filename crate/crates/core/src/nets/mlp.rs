use rand::Rng;

use super::layers::{Activation, Init, Linear};
use super::params::ParamSet;
use crate::real::Real;

/// Fully connected network: hidden layers share one activation, the output
/// layer is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub act: Activation,
    pub omega: f64,
}

/// Per-layer inputs and hidden pre-activations from a forward pass.
pub struct MlpCache<T> {
    rows: usize,
    inputs: Vec<Vec<T>>,
    pres: Vec<Vec<T>>,
}

/// Initialization of one layer given its position.
pub type LayerInit = dyn Fn(usize, usize, usize) -> (Init, Init);

impl Mlp {
    /// `dims = [in, hidden..., out]`. `init(layer, fan_in, fan_out)` picks the
    /// weight and bias rules.
    pub fn build<T: Real, R: Rng>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        dims: &[usize],
        act: Activation,
        omega: f64,
        init: &LayerInit,
        rng: &mut R,
    ) -> Mlp {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, d)| {
                let (wi, bi) = init(l, d[0], d[1]);
                Linear::register(ps, &format!("{prefix}.{l}"), d[0], d[1], wi, bi, rng)
            })
            .collect();
        Mlp { layers, act, omega }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T], rows: usize) -> Vec<T> {
        let omega = T::lit(self.omega);
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].forward(ps, x, rows);
        for l in 1..=last {
            let pre = h;
            let mut act = vec![T::zero(); pre.len()];
            self.act.apply(omega, &pre, &mut act);
            h = self.layers[l].forward(ps, &act, rows);
        }
        h
    }

    pub fn forward_cached<T: Real>(&self, ps: &ParamSet<T>, x: Vec<T>, rows: usize) -> (Vec<T>, MlpCache<T>) {
        let omega = T::lit(self.omega);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len() - 1);
        let mut h = self.layers[0].forward(ps, &x, rows);
        inputs.push(x);
        for layer in &self.layers[1..] {
            let mut act = vec![T::zero(); h.len()];
            self.act.apply(omega, &h, &mut act);
            pres.push(h);
            h = layer.forward(ps, &act, rows);
            inputs.push(act);
        }
        (h, MlpCache { rows, inputs, pres })
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `want_dx`.
    pub fn backward<T: Real>(
        &self,
        ps: &ParamSet<T>,
        cache: &MlpCache<T>,
        dy: Vec<T>,
        grads: &mut ParamSet<T>,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let omega = T::lit(self.omega);
        let mut d = dy;
        for l in (0..self.layers.len()).rev() {
            let need = l > 0 || want_dx;
            let dx = self.layers[l].backward(ps, &cache.inputs[l], &d, cache.rows, grads, need);
            match dx {
                Some(mut dx) if l > 0 => {
                    self.act.backward(omega, &cache.pres[l - 1], &mut dx);
                    d = dx;
                }
                other => return other,
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cached_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::<f64>::new();
        let mlp = Mlp::build(&mut ps, "m", &[3, 5, 5, 2], Activation::Silu, 1.0, &|_, _, _| (Init::FanInUniform, Init::FanInUniform), &mut rng);
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let a = mlp.forward(&ps, &x, 4);
        let (b, _) = mlp.forward_cached(&ps, x, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::<f64>::new();
        let mlp = Mlp::build(&mut ps, "m", &[2, 4, 1], Activation::Sine, 2.0, &|_, _, _| (Init::FanInUniform, Init::FanInUniform), &mut rng);
        let x = vec![0.3, -0.7];
        let (_, cache) = mlp.forward_cached(&ps, x.clone(), 1);
        let mut g = ps.zeros_like();
        let dx = mlp.backward(&ps, &cache, vec![1.0], &mut g, true).unwrap();
        for i in 0..2 {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let fd = (mlp.forward(&ps, &xp, 1)[0] - mlp.forward(&ps, &xm, 1)[0]) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }
}
