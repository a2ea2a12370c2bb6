//! The three learnable components and the model state that bundles them.
//!
//! Public entry points ([`encode`], [`decode`], [`ode_rhs`]) take and return
//! physical field values; the networks themselves see normalized values.

pub mod decoder;
pub mod encoder;
pub mod gradcheck;
pub mod layers;
pub mod mlp;
pub mod odefunc;
pub mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use decoder::{Decoder, DecoderConfig};
pub use encoder::{Encoder, EncoderConfig, EncoderKind, InitScheme};
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
pub use layers::Activation;
pub use odefunc::{OdeFunc, OdeFuncConfig};
pub use params::{ParamBlock, ParamSet};

use crate::datastore::{FieldSnapshot, Norm};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ArchConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub odefunc: OdeFuncConfig,
}

impl ArchConfig {
    pub fn d_z(&self) -> usize {
        self.encoder.d_z
    }

    /// Sets the latent dimension on all three components.
    pub fn with_d_z(mut self, d_z: usize) -> Self {
        self.encoder.d_z = d_z;
        self.decoder.d_z = d_z;
        self.odefunc.d_z = d_z;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.odefunc.validate()?;
        let d = self.encoder.d_z;
        if self.decoder.d_z != d {
            return Err(Error::config(
                "decoder.d_z",
                format!("decoder d_z = {} but encoder d_z = {d}", self.decoder.d_z),
            ));
        }
        if self.odefunc.d_z != d {
            return Err(Error::config(
                "odefunc.d_z",
                format!("ODE function d_z = {} but encoder d_z = {d}", self.odefunc.d_z),
            ));
        }
        if self.decoder.ndim != self.encoder.ndim {
            return Err(Error::config("decoder.ndim", "decoder and encoder disagree on ndim"));
        }
        Ok(())
    }
}

/// Latent state `z(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("latent vector must have d_z >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("latent vector has non-finite entries".into()));
        }
        Ok(LatentVector { values })
    }

    pub fn d_z(&self) -> usize {
        self.values.len()
    }
}

/// Ordered latent states of one source trajectory, stored `len x d_z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectory {
    pub source: usize,
    pub times: Vec<f64>,
    pub d_z: usize,
    pub values: Vec<f64>,
    /// Set when the trajectory belongs to the held-out split.
    #[serde(default)]
    pub test: bool,
}

impl LatentTrajectory {
    pub fn new(source: usize, times: Vec<f64>, d_z: usize, values: Vec<f64>) -> Result<Self> {
        if d_z == 0 || values.len() != times.len() * d_z {
            return Err(Error::Shape(format!(
                "latent trajectory has {} values for {} times at d_z = {d_z}",
                values.len(),
                times.len()
            )));
        }
        Ok(LatentTrajectory {
            source,
            times,
            d_z,
            values,
            test: false,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.values[i * self.d_z..(i + 1) * self.d_z]
    }

    /// Uniform spacing, if the times are uniformly spaced.
    pub fn dt(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = self.times[1] - self.times[0];
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
        uniform.then_some(dt)
    }
}

/// Encoder, decoder and ODE function together with the field normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T = f32> {
    pub arch: ArchConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
    pub odefunc: OdeFunc<T>,
    pub norm: Norm,
}

/// Gradient buffers matching a [`ModelState`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<T> {
    pub encoder: ParamSet<T>,
    pub decoder: ParamSet<T>,
    pub odefunc: ParamSet<T>,
}

impl<T: Real> ModelGrads<T> {
    pub fn sq_norm(&self) -> f64 {
        self.encoder.sq_norm() + self.decoder.sq_norm() + self.odefunc.sq_norm()
    }
}

pub fn init_model(
    encoder: &EncoderConfig,
    decoder: &DecoderConfig,
    odefunc: &OdeFuncConfig,
    seed: u64,
) -> Result<ModelState<f32>> {
    init_model_as(encoder, decoder, odefunc, seed)
}

/// Same as [`init_model`] in any precision; parameters are drawn in `f64`
/// order so the `f32` and `f64` models share their initial values.
pub fn init_model_as<T: Real>(
    encoder: &EncoderConfig,
    decoder: &DecoderConfig,
    odefunc: &OdeFuncConfig,
    seed: u64,
) -> Result<ModelState<T>> {
    let arch = ArchConfig {
        encoder: encoder.clone(),
        decoder: decoder.clone(),
        odefunc: odefunc.clone(),
    };
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = Encoder::new(encoder, &mut rng)?;
    let dec = Decoder::new(decoder, &mut rng)?;
    let ode = OdeFunc::new(odefunc, &mut rng)?;
    Ok(ModelState {
        arch,
        encoder: enc,
        decoder: dec,
        odefunc: ode,
        norm: Norm::default(),
    })
}

impl<T: Real> ModelState<T> {
    pub fn d_z(&self) -> usize {
        self.arch.d_z()
    }

    pub fn zero_grads(&self) -> ModelGrads<T> {
        ModelGrads {
            encoder: self.encoder.params.zeros_like(),
            decoder: self.decoder.params.zeros_like(),
            odefunc: self.odefunc.params.zeros_like(),
        }
    }

    pub fn cast<U: Real>(&self) -> ModelState<U> {
        ModelState {
            arch: self.arch.clone(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            odefunc: self.odefunc.cast(),
            norm: self.norm,
        }
    }

    pub fn num_params(&self) -> usize {
        self.encoder.params.num_params() + self.decoder.params.num_params() + self.odefunc.params.num_params()
    }
}

/// Maps a physical snapshot to its latent vector.
pub fn encode<T: Real>(state: &ModelState<T>, field: &FieldSnapshot) -> Result<LatentVector> {
    let cfg = &state.arch.encoder;
    let want: Vec<usize> = vec![cfg.nx; cfg.ndim];
    if field.shape != want {
        return Err(Error::Shape(format!(
            "encoder input resolution is fixed at {want:?}, got a field of shape {:?}",
            field.shape
        )));
    }
    let x: Vec<T> = field.values.iter().map(|&v| T::lit(state.norm.apply(v) as f64)).collect();
    let z = state.encoder.forward(&x, 1)?;
    LatentVector::new(z.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
}

/// Evaluates the decoded field at `queries` (`ndim` values per point).
pub fn decode<T: Real>(state: &ModelState<T>, z: &LatentVector, queries: &[f64]) -> Result<Vec<f32>> {
    decode_many(state, &z.values, 1, queries)
}

/// Decodes `n_latent` stacked latent vectors; returns `n_latent x n_query` physical values.
pub fn decode_many<T: Real>(state: &ModelState<T>, z: &[f64], n_latent: usize, queries: &[f64]) -> Result<Vec<f32>> {
    if z.len() != n_latent * state.d_z() {
        return Err(Error::Shape(format!(
            "decoder expects d_z = {}, got {} values for {n_latent} latent vectors",
            state.d_z(),
            z.len()
        )));
    }
    let feats = state.decoder.features(queries)?;
    let zt: Vec<T> = z.iter().map(|&v| T::lit(v)).collect();
    let y = state.decoder.forward(&zt, n_latent, &feats)?;
    Ok(y.iter().map(|v| state.norm.invert(v.to_f32().unwrap_or(f32::NAN))).collect())
}

/// `dz/dt` at `z`.
pub fn ode_rhs<T: Real>(state: &ModelState<T>, z: &LatentVector) -> Result<LatentVector> {
    let zt: Vec<T> = z.values.iter().map(|&v| T::lit(v)).collect();
    let h = state.odefunc.eval(&zt, 1)?;
    Ok(LatentVector {
        values: h.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdegen::uniform_coords;

    fn small(d_z: usize) -> ArchConfig {
        ArchConfig {
            encoder: EncoderConfig {
                nx: 16,
                widths: vec![4, 8],
                blocks: 2,
                d_z,
                ..Default::default()
            },
            decoder: DecoderConfig {
                hidden_layers: 2,
                width: 16,
                d_z,
                ..Default::default()
            },
            odefunc: OdeFuncConfig {
                hidden_layers: 2,
                width: 8,
                d_z,
                ..Default::default()
            },
        }
    }

    fn model(a: &ArchConfig, seed: u64) -> ModelState {
        init_model(&a.encoder, &a.decoder, &a.odefunc, seed).unwrap()
    }

    fn field(nx: usize, phase: f64) -> FieldSnapshot {
        let c = uniform_coords(nx, 2);
        let v = c
            .chunks(2)
            .map(|p| ((6.283 * p[0] + phase).sin() * (6.283 * p[1]).cos()) as f32)
            .collect();
        FieldSnapshot::new(v, vec![nx, nx], 0.0).unwrap()
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = small(3);
        assert_eq!(model(&a, 5), model(&a, 5));
        assert_ne!(model(&a, 5).encoder.params, model(&a, 6).encoder.params);
    }

    #[test]
    fn inconsistent_d_z_rejected() {
        let mut a = small(3);
        a.decoder.d_z = 4;
        let r = init_model(&a.encoder, &a.decoder, &a.odefunc, 0);
        assert!(matches!(r, Err(Error::Config { key, .. }) if key == "decoder.d_z"));
    }

    #[test]
    fn desk_default_encodes_to_d_z() {
        let a = ArchConfig::default();
        assert_eq!(a.encoder.nx, 32);
        assert_eq!(a.encoder.widths, vec![16, 32, 64, 128]);
        assert_eq!(a.encoder.blocks, 4);
        let st = model(&a, 0);
        let z = encode(&st, &field(32, 0.3)).unwrap();
        assert_eq!(z.d_z(), 10);
        assert!(z.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn resnet50_head_reduces_from_2048() {
        let mut a = ArchConfig::default();
        a.encoder = EncoderConfig::resnet50(64, 10);
        a.decoder.width = 32;
        a.decoder.hidden_layers = 1;
        a.odefunc.width = 8;
        a.odefunc.hidden_layers = 1;
        let st = model(&a, 0);
        assert_eq!(st.encoder.feature_width(), 2048);
        assert_eq!(st.encoder.blocks.len(), 16);
        let z = encode(&st, &field(64, 0.1)).unwrap();
        assert_eq!(z.d_z(), 10);
        assert!(z.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encode_is_deterministic_and_checks_resolution() {
        let st = model(&small(4), 1);
        let f = field(16, 0.7);
        assert_eq!(encode(&st, &f).unwrap(), encode(&st, &f).unwrap());
        let zero = FieldSnapshot::new(vec![0.0; 256], vec![16, 16], 0.0).unwrap();
        assert!(encode(&st, &zero).unwrap().values.iter().all(|v| v.is_finite()));
        assert!(matches!(encode(&st, &field(32, 0.0)), Err(Error::Shape(_))));
    }

    #[test]
    fn decode_duplicates_and_super_resolution() {
        let st = model(&small(4), 2);
        let z = encode(&st, &field(16, 0.2)).unwrap();
        let q = [0.25, 0.5, 0.25, 0.5, 0.1, 0.9];
        let y = decode(&st, &z, &q).unwrap();
        assert_eq!(y[0], y[1]);
        let coarse = decode(&st, &z, &uniform_coords(16, 2)).unwrap();
        let fine = decode(&st, &z, &uniform_coords(64, 2)).unwrap();
        assert!(fine.iter().all(|v| v.is_finite()));
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(coarse[i * 16 + j].to_bits(), fine[(4 * i) * 64 + 4 * j].to_bits());
            }
        }
        let bad = LatentVector::new(vec![0.0; 3]).unwrap();
        assert!(matches!(decode(&st, &bad, &q), Err(Error::Shape(_))));
    }

    #[test]
    fn decode_wraps_periodic_coordinates() {
        let st = model(&small(2), 3);
        let z = LatentVector::new(vec![0.3, -0.2]).unwrap();
        let a = decode(&st, &z, &[0.25, 0.75]).unwrap();
        let b = decode(&st, &z, &[1.25, -0.25]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decoder_is_lipschitz_in_coordinates() {
        let st: ModelState<f64> = model(&small(3), 4).cast();
        let z = LatentVector::new(vec![0.5, -0.1, 0.2]).unwrap();
        // Slope bound measured on a coarse stencil.
        let mut lip = 0.0f64;
        for k in 0..50 {
            let x = 0.1 + 0.015 * k as f64;
            let y0 = decode(&st, &z, &[x, 0.3]).unwrap()[0] as f64;
            let y1 = decode(&st, &z, &[x + 1e-3, 0.3]).unwrap()[0] as f64;
            lip = lip.max((y1 - y0).abs() / 1e-3);
        }
        let feats = |x: f64| st.decoder.features(&[x, 0.3]).unwrap();
        let zt = z.values.clone();
        for k in 0..50 {
            let x = 0.1 + 0.015 * k as f64;
            let a = st.decoder.forward(&zt, 1, &feats(x)).unwrap()[0];
            let b = st.decoder.forward(&zt, 1, &feats(x + 1e-6)).unwrap()[0];
            assert!((a - b).abs() <= 2.0 * lip * 1e-6 + 1e-12, "{} vs {}", (a - b).abs(), lip);
        }
    }

    #[test]
    fn zero_output_layer_gives_zero_rhs() {
        let mut a = small(10);
        a.odefunc.zero_init_output = true;
        let st = model(&a, 0);
        for s in 0..5 {
            let z = LatentVector::new((0..10).map(|i| (i * s) as f64 * 0.1 - 1.0).collect()).unwrap();
            let h = ode_rhs(&st, &z).unwrap();
            assert_eq!(h.d_z(), 10);
            assert!(h.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn every_parameter_block_receives_gradient() {
        use crate::losses::{stage1_backward, SegmentBatch};
        let st: ModelState<f64> = model(&small(3), 9).cast();
        let coords = uniform_coords(16, 2);
        let data: Vec<f64> = (0..2 * 4 * 256).map(|i| ((i as f64) * 0.137).sin()).collect();
        let batch = SegmentBatch::from_raw(data, 2, coords, 2).unwrap();
        let mut g = st.zero_grads();
        stage1_backward(&st, &batch, 1.0, 0.1, &mut g).unwrap();
        let z: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 0.5).collect();
        let (h, cache) = st.odefunc.eval_cached(z, 2);
        st.odefunc.backward(&cache, h.iter().map(|_| 1.0).collect(), &mut g.odefunc);
        for ps in [&g.encoder, &g.decoder, &g.odefunc] {
            for b in &ps.blocks {
                assert!(b.data.iter().any(|&v| v != 0.0), "dead block {}", b.name);
            }
        }
    }
}
