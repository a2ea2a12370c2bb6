//! Conditional coordinate decoder: `u(x) = D([z, embed(x)])`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Init};
use super::mlp::{Mlp, MlpCache};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    /// Frequency multiplier for the sine activation.
    pub sine_omega: f64,
    /// Periodic Fourier features per axis (`sin`, `cos` of `m * pi * x'` for
    /// `m = 1..=fourier_freqs`); 0 disables the embedding.
    pub fourier_freqs: usize,
    pub d_z: usize,
    pub ndim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            hidden_layers: 7,
            width: 512,
            activation: Activation::Silu,
            sine_omega: 30.0,
            fourier_freqs: 0,
            d_z: 10,
            ndim: 2,
        }
    }
}

impl DecoderConfig {
    pub fn feature_dim(&self) -> usize {
        self.ndim * (1 + 2 * self.fourier_freqs)
    }

    pub fn input_dim(&self) -> usize {
        self.d_z + self.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.activation == Activation::Relu {
            return Err(Error::config(
                "decoder.activation",
                "the decoder must be smooth in its inputs (silu or sine)",
            ));
        }
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::config("decoder.width", "decoder needs at least one hidden layer"));
        }
        if self.d_z == 0 {
            return Err(Error::config("decoder.d_z", "latent dimension must be >= 1"));
        }
        if self.ndim != 1 && self.ndim != 2 {
            return Err(Error::config("decoder.ndim", "1 or 2 spatial dimensions"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder<T> {
    pub cfg: DecoderConfig,
    pub mlp: Mlp,
    pub params: ParamSet<T>,
}

impl<T: Real> Decoder<T> {
    pub fn new<R: Rng>(cfg: &DecoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut dims = vec![cfg.input_dim()];
        dims.extend(std::iter::repeat(cfg.width).take(cfg.hidden_layers));
        dims.push(1);
        let mut params = ParamSet::new();
        let sine = cfg.activation == Activation::Sine;
        let omega = cfg.sine_omega;
        let mlp = Mlp::build(
            &mut params,
            "decoder",
            &dims,
            cfg.activation,
            omega,
            &move |l, fan_in, _| {
                if !sine {
                    (Init::FanInUniform, Init::FanInUniform)
                } else if l == 0 {
                    (Init::Uniform(1.0 / fan_in as f64), Init::FanInUniform)
                } else {
                    (Init::Uniform((6.0 / fan_in as f64).sqrt() / omega), Init::FanInUniform)
                }
            },
            rng,
        );
        Ok(Decoder {
            cfg: cfg.clone(),
            mlp,
            params,
        })
    }

    pub fn cast<U: Real>(&self) -> Decoder<U> {
        Decoder {
            cfg: self.cfg.clone(),
            mlp: self.mlp.clone(),
            params: self.params.cast(),
        }
    }

    /// Coordinate features for flattened query points (`ndim` per point).
    /// Points are wrapped into the unit cell and mapped to `[-1, 1)`.
    pub fn features(&self, coords: &[f64]) -> Result<Vec<T>> {
        let nd = self.cfg.ndim;
        if coords.len() % nd != 0 {
            return Err(Error::Shape(format!(
                "{} coordinate values are not a multiple of ndim = {nd}",
                coords.len()
            )));
        }
        let mut out = Vec::with_capacity(coords.len() / nd * self.cfg.feature_dim());
        for p in coords.chunks(nd) {
            let mapped: Vec<f64> = p.iter().map(|&x| 2.0 * (x - x.floor()) - 1.0).collect();
            out.extend(mapped.iter().map(|&v| T::lit(v)));
            for &v in &mapped {
                for m in 1..=self.cfg.fourier_freqs {
                    let a = std::f64::consts::PI * m as f64 * v;
                    out.push(T::lit(a.sin()));
                    out.push(T::lit(a.cos()));
                }
            }
        }
        Ok(out)
    }

    fn assemble(&self, z: &[T], n_latent: usize, feats: &[T]) -> Vec<T> {
        let (dz, fd) = (self.cfg.d_z, self.cfg.feature_dim());
        let nq = feats.len() / fd;
        let mut x = Vec::with_capacity(n_latent * nq * (dz + fd));
        for s in 0..n_latent {
            let zs = &z[s * dz..(s + 1) * dz];
            for q in 0..nq {
                x.extend_from_slice(zs);
                x.extend_from_slice(&feats[q * fd..(q + 1) * fd]);
            }
        }
        x
    }

    fn check_latent(&self, z: &[T], n_latent: usize) -> Result<()> {
        if z.len() != n_latent * self.cfg.d_z {
            return Err(Error::Shape(format!(
                "decoder expects d_z = {}, got {} values for {n_latent} latent vectors",
                self.cfg.d_z,
                z.len()
            )));
        }
        Ok(())
    }

    /// Values at every query for every latent vector, `n_latent x n_query`.
    pub fn forward(&self, z: &[T], n_latent: usize, feats: &[T]) -> Result<Vec<T>> {
        self.check_latent(z, n_latent)?;
        let rows = n_latent * feats.len() / self.cfg.feature_dim();
        let x = self.assemble(z, n_latent, feats);
        Ok(self.mlp.forward(&self.params, &x, rows))
    }

    pub fn forward_cached(&self, z: &[T], n_latent: usize, feats: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        self.check_latent(z, n_latent)?;
        let rows = n_latent * feats.len() / self.cfg.feature_dim();
        let x = self.assemble(z, n_latent, feats);
        Ok(self.mlp.forward_cached(&self.params, x, rows))
    }

    /// Backward pass; returns `dL/dz` summed over queries.
    pub fn backward(&self, cache: &MlpCache<T>, dy: Vec<T>, n_latent: usize, grads: &mut ParamSet<T>) -> Vec<T> {
        let (dz, ind) = (self.cfg.d_z, self.cfg.input_dim());
        let dx = self
            .mlp
            .backward(&self.params, cache, dy, grads, true)
            .expect("input gradient requested");
        let nq = dx.len() / ind / n_latent.max(1);
        let mut out = vec![T::zero(); n_latent * dz];
        for s in 0..n_latent {
            let acc = &mut out[s * dz..(s + 1) * dz];
            for q in 0..nq {
                let row = &dx[(s * nq + q) * ind..][..dz];
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        out
    }
}
