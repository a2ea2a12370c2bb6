//! Autonomous latent vector field `dz/dt = h(z)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Init};
use super::mlp::{Mlp, MlpCache};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeFuncConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub d_z: usize,
    /// Start from `h == 0` by zeroing the output layer.
    pub zero_init_output: bool,
}

impl Default for OdeFuncConfig {
    fn default() -> Self {
        OdeFuncConfig {
            hidden_layers: 5,
            width: 512,
            d_z: 10,
            zero_init_output: false,
        }
    }
}

impl OdeFuncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::config("odefunc.width", "ODE function needs a hidden layer"));
        }
        if self.d_z == 0 {
            return Err(Error::config("odefunc.d_z", "latent dimension must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeFunc<T> {
    pub cfg: OdeFuncConfig,
    pub mlp: Mlp,
    pub params: ParamSet<T>,
}

impl<T: Real> OdeFunc<T> {
    pub fn new<R: Rng>(cfg: &OdeFuncConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut dims = vec![cfg.d_z];
        dims.extend(std::iter::repeat(cfg.width).take(cfg.hidden_layers));
        dims.push(cfg.d_z);
        let last = dims.len() - 2;
        let zero_out = cfg.zero_init_output;
        let mut params = ParamSet::new();
        let mlp = Mlp::build(
            &mut params,
            "odefunc",
            &dims,
            Activation::Silu,
            1.0,
            &move |l, _, _| {
                if zero_out && l == last {
                    (Init::Zeros, Init::Zeros)
                } else {
                    (Init::FanInUniform, Init::FanInUniform)
                }
            },
            rng,
        );
        Ok(OdeFunc {
            cfg: cfg.clone(),
            mlp,
            params,
        })
    }

    pub fn cast<U: Real>(&self) -> OdeFunc<U> {
        OdeFunc {
            cfg: self.cfg.clone(),
            mlp: self.mlp.clone(),
            params: self.params.cast(),
        }
    }

    /// Evaluates `h` on `rows` stacked latent vectors.
    pub fn eval(&self, z: &[T], rows: usize) -> Result<Vec<T>> {
        if z.len() != rows * self.cfg.d_z {
            return Err(Error::Shape(format!(
                "ODE function expects d_z = {}, got {} values for {rows} rows",
                self.cfg.d_z,
                z.len()
            )));
        }
        Ok(self.mlp.forward(&self.params, z, rows))
    }

    pub fn eval_cached(&self, z: Vec<T>, rows: usize) -> (Vec<T>, MlpCache<T>) {
        self.mlp.forward_cached(&self.params, z, rows)
    }

    pub fn backward(&self, cache: &MlpCache<T>, dy: Vec<T>, grads: &mut ParamSet<T>) -> Vec<T> {
        self.mlp
            .backward(&self.params, cache, dy, grads, true)
            .expect("input gradient requested")
    }
}
