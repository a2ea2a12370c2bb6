//! Residual CNN encoder, `z = E(u)`.
//!
//! Two layouts are available: a configurable residual network of basic
//! blocks (default, sized for desk-scale runs) and a ResNet50-style network of
//! bottleneck blocks ending in a 2048-wide feature vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, Init, Linear, MapShape};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Residual,
    Resnet50,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    KaimingNormal,
    FanInUniform,
}

impl InitScheme {
    fn init(self) -> Init {
        match self {
            InitScheme::KaimingNormal => Init::KaimingNormal,
            InitScheme::FanInUniform => Init::FanInUniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Input resolution per axis.
    pub nx: usize,
    pub ndim: usize,
    /// Channel width of each stage; every stage after the first halves the resolution.
    pub widths: Vec<usize>,
    /// Total residual blocks, spread over the stages (earlier stages get the remainder).
    pub blocks: usize,
    pub stem_stride: usize,
    pub d_z: usize,
    pub init: InitScheme,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Residual,
            nx: 32,
            ndim: 2,
            widths: vec![16, 32, 64, 128],
            blocks: 4,
            stem_stride: 1,
            d_z: 10,
            init: InitScheme::KaimingNormal,
        }
    }
}

impl EncoderConfig {
    /// ResNet50-style layout for `nx x nx` single-channel input.
    pub fn resnet50(nx: usize, d_z: usize) -> Self {
        EncoderConfig {
            kind: EncoderKind::Resnet50,
            nx,
            ndim: 2,
            widths: vec![256, 512, 1024, 2048],
            blocks: 16,
            stem_stride: 2,
            d_z,
            init: InitScheme::KaimingNormal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_z == 0 {
            return Err(Error::config("encoder.d_z", "latent dimension must be >= 1"));
        }
        if self.ndim != 1 && self.ndim != 2 {
            return Err(Error::config("encoder.ndim", "1 or 2 spatial dimensions"));
        }
        if self.kind == EncoderKind::Resnet50 && self.ndim != 2 {
            return Err(Error::config("encoder.kind", "resnet50 needs 2D input"));
        }
        let stages = self.stage_count();
        if stages == 0 {
            return Err(Error::config("encoder.widths", "need at least one stage"));
        }
        if self.kind == EncoderKind::Residual && self.blocks < stages {
            return Err(Error::config("encoder.blocks", "need at least one block per stage"));
        }
        let shrink = self.stem_stride.max(1) << (stages - 1);
        if self.nx == 0 || self.nx % shrink != 0 {
            return Err(Error::config(
                "encoder.nx",
                format!("input size {} is not divisible by the total stride {shrink}", self.nx),
            ));
        }
        Ok(())
    }

    fn stage_count(&self) -> usize {
        match self.kind {
            EncoderKind::Residual => self.widths.len(),
            EncoderKind::Resnet50 => 4,
        }
    }

    fn kernel(&self, k: usize) -> (usize, usize) {
        if self.ndim == 1 {
            (1, k)
        } else {
            (k, k)
        }
    }

    fn stride(&self, s: usize) -> (usize, usize) {
        if self.ndim == 1 {
            (1, s)
        } else {
            (s, s)
        }
    }
}

/// `relu(main(x) + shortcut(x))`, ReLU between the main-path convolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    pub main: Vec<Conv2d>,
    pub shortcut: Option<Conv2d>,
}

struct BlockCache<T> {
    in_shape: MapShape,
    main_shapes: Vec<MapShape>,
    main_cols: Vec<Vec<T>>,
    /// Post-ReLU outputs of the inner main convolutions.
    main_acts: Vec<Vec<T>>,
    sc_cols: Option<Vec<T>>,
    out: Vec<T>,
}

pub struct EncoderCache<T> {
    batch: usize,
    stem_shape: MapShape,
    stem_cols: Vec<T>,
    stem_out: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    last_shape: MapShape,
    pooled: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub cfg: EncoderConfig,
    pub stem: Conv2d,
    pub blocks: Vec<ResBlock>,
    pub head: Linear,
    pub params: ParamSet<T>,
}

fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn relu_mask<T: Real>(act: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

impl<T: Real> Encoder<T> {
    pub fn new<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let init = cfg.init.init();
        let mut ps = ParamSet::new();
        let mut blocks = Vec::new();
        let (stem, feat) = match cfg.kind {
            EncoderKind::Residual => {
                let stem = Conv2d::register(&mut ps, "encoder.stem", 1, cfg.widths[0], cfg.kernel(3), cfg.stride(cfg.stem_stride), init, rng);
                let stages = cfg.widths.len();
                let mut cin = cfg.widths[0];
                let mut idx = 0;
                for (s, &w) in cfg.widths.iter().enumerate() {
                    let n = cfg.blocks / stages + usize::from(s < cfg.blocks % stages);
                    for b in 0..n {
                        let stride = if s > 0 && b == 0 { 2 } else { 1 };
                        let name = format!("encoder.block{idx}");
                        let c1 = Conv2d::register(&mut ps, &format!("{name}.conv1"), cin, w, cfg.kernel(3), cfg.stride(stride), init, rng);
                        let c2 = Conv2d::register(&mut ps, &format!("{name}.conv2"), w, w, cfg.kernel(3), cfg.stride(1), init, rng);
                        let shortcut = (cin != w || stride != 1).then(|| {
                            Conv2d::register(&mut ps, &format!("{name}.proj"), cin, w, cfg.kernel(1), cfg.stride(stride), init, rng)
                        });
                        blocks.push(ResBlock {
                            main: vec![c1, c2],
                            shortcut,
                        });
                        cin = w;
                        idx += 1;
                    }
                }
                (stem, cin)
            }
            EncoderKind::Resnet50 => {
                let stem = Conv2d::register(&mut ps, "encoder.stem", 1, 64, cfg.kernel(7), cfg.stride(cfg.stem_stride), init, rng);
                let layout = [(64, 3), (128, 4), (256, 6), (512, 3)];
                let mut cin = 64;
                let mut idx = 0;
                for (s, &(mid, n)) in layout.iter().enumerate() {
                    let out = mid * 4;
                    for b in 0..n {
                        let stride = if s > 0 && b == 0 { 2 } else { 1 };
                        let name = format!("encoder.block{idx}");
                        let c1 = Conv2d::register(&mut ps, &format!("{name}.conv1"), cin, mid, cfg.kernel(1), cfg.stride(1), init, rng);
                        let c2 = Conv2d::register(&mut ps, &format!("{name}.conv2"), mid, mid, cfg.kernel(3), cfg.stride(stride), init, rng);
                        let c3 = Conv2d::register(&mut ps, &format!("{name}.conv3"), mid, out, cfg.kernel(1), cfg.stride(1), init, rng);
                        let shortcut = (cin != out || stride != 1).then(|| {
                            Conv2d::register(&mut ps, &format!("{name}.proj"), cin, out, cfg.kernel(1), cfg.stride(stride), init, rng)
                        });
                        blocks.push(ResBlock {
                            main: vec![c1, c2, c3],
                            shortcut,
                        });
                        cin = out;
                        idx += 1;
                    }
                }
                (stem, cin)
            }
        };
        let head = Linear::register(&mut ps, "encoder.head", feat, cfg.d_z, init, Init::Zeros, rng);
        Ok(Encoder {
            cfg: cfg.clone(),
            stem,
            blocks,
            head,
            params: ps,
        })
    }

    pub fn cast<U: Real>(&self) -> Encoder<U> {
        Encoder {
            cfg: self.cfg.clone(),
            stem: self.stem.clone(),
            blocks: self.blocks.clone(),
            head: self.head.clone(),
            params: self.params.cast(),
        }
    }

    /// Width of the pooled feature vector fed to the final linear layer.
    pub fn feature_width(&self) -> usize {
        self.head.fan_in
    }

    pub fn input_len(&self) -> usize {
        self.cfg.nx.pow(self.cfg.ndim as u32)
    }

    fn input_shape(&self, batch: usize) -> MapShape {
        MapShape {
            channels: 1,
            batch,
            h: if self.cfg.ndim == 1 { 1 } else { self.cfg.nx },
            w: self.cfg.nx,
        }
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if x.len() != batch * self.input_len() {
            return Err(Error::Shape(format!(
                "encoder expects {batch} fields of {} points (resolution {}), got {} values",
                self.input_len(),
                self.cfg.nx,
                x.len()
            )));
        }
        Ok(())
    }

    /// Encodes `batch` fields stored back to back; returns `batch x d_z`.
    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let ps = &self.params;
        let s = self.input_shape(batch);
        let (mut h, _) = self.stem.forward(ps, x, s, false);
        relu_inplace(&mut h);
        let mut shape = self.stem.out_shape(s);
        for blk in &self.blocks {
            let mut m = h.clone();
            let mut ms = shape;
            for (i, conv) in blk.main.iter().enumerate() {
                let (y, _) = conv.forward(ps, &m, ms, false);
                ms = conv.out_shape(ms);
                m = y;
                if i + 1 < blk.main.len() {
                    relu_inplace(&mut m);
                }
            }
            let sc = match &blk.shortcut {
                Some(conv) => conv.forward(ps, &h, shape, false).0,
                None => h,
            };
            for (a, b) in m.iter_mut().zip(&sc) {
                *a += *b;
            }
            relu_inplace(&mut m);
            h = m;
            shape = ms;
        }
        let pooled = pool(&h, shape);
        Ok(self.head.forward(ps, &pooled, batch))
    }

    pub fn forward_cached(&self, x: &[T], batch: usize) -> Result<(Vec<T>, EncoderCache<T>)> {
        self.check_input(x, batch)?;
        let ps = &self.params;
        let s = self.input_shape(batch);
        let (mut h, stem_cols) = self.stem.forward(ps, x, s, true);
        relu_inplace(&mut h);
        let stem_out = h.clone();
        let mut shape = self.stem.out_shape(s);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let mut m = h.clone();
            let mut ms = shape;
            let mut main_shapes = Vec::new();
            let mut main_cols = Vec::new();
            let mut main_acts = Vec::new();
            for (i, conv) in blk.main.iter().enumerate() {
                main_shapes.push(ms);
                let (y, cols) = conv.forward(ps, &m, ms, true);
                main_cols.push(cols.expect("kept"));
                ms = conv.out_shape(ms);
                m = y;
                if i + 1 < blk.main.len() {
                    relu_inplace(&mut m);
                    main_acts.push(m.clone());
                }
            }
            let (sc, sc_cols) = match &blk.shortcut {
                Some(conv) => {
                    let (y, cols) = conv.forward(ps, &h, shape, true);
                    (y, cols)
                }
                None => (h, None),
            };
            for (a, b) in m.iter_mut().zip(&sc) {
                *a += *b;
            }
            relu_inplace(&mut m);
            caches.push(BlockCache {
                in_shape: shape,
                main_shapes,
                main_cols,
                main_acts,
                sc_cols,
                out: m.clone(),
            });
            h = m;
            shape = ms;
        }
        let pooled = pool(&h, shape);
        let z = self.head.forward(ps, &pooled, batch);
        Ok((
            z,
            EncoderCache {
                batch,
                stem_shape: s,
                stem_cols: stem_cols.expect("kept"),
                stem_out,
                blocks: caches,
                last_shape: shape,
                pooled,
            },
        ))
    }

    /// Accumulates parameter gradients for `dL/dz` (`batch x d_z`).
    pub fn backward(&self, cache: &EncoderCache<T>, dz: &[T], grads: &mut ParamSet<T>) {
        let ps = &self.params;
        let dpool = self
            .head
            .backward(ps, &cache.pooled, dz, cache.batch, grads, true)
            .expect("requested");
        let s = cache.last_shape;
        let hw = s.h * s.w;
        let inv = T::one() / T::lit(hw as f64);
        let mut d = vec![T::zero(); s.len()];
        for c in 0..s.channels {
            for b in 0..s.batch {
                let g = dpool[b * s.channels + c] * inv;
                d[c * s.plane() + b * hw..][..hw].iter_mut().for_each(|v| *v = g);
            }
        }
        for (blk, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            relu_mask(&bc.out, &mut d);
            let mut dm = d.clone();
            for i in (0..blk.main.len()).rev() {
                let dx = blk.main[i]
                    .backward(ps, &bc.main_cols[i], &dm, bc.main_shapes[i], grads, true)
                    .expect("requested");
                dm = dx;
                if i > 0 {
                    relu_mask(&bc.main_acts[i - 1], &mut dm);
                }
            }
            let dsc = match (&blk.shortcut, &bc.sc_cols) {
                (Some(conv), Some(cols)) => conv.backward(ps, cols, &d, bc.in_shape, grads, true).expect("requested"),
                _ => d,
            };
            d = dm;
            for (a, b) in d.iter_mut().zip(&dsc) {
                *a += *b;
            }
        }
        relu_mask(&cache.stem_out, &mut d);
        self.stem.backward(ps, &cache.stem_cols, &d, cache.stem_shape, grads, false);
    }
}

/// Global average pooling to `batch x channels`.
fn pool<T: Real>(h: &[T], s: MapShape) -> Vec<T> {
    let hw = s.h * s.w;
    let inv = T::one() / T::lit(hw as f64);
    let mut out = vec![T::zero(); s.batch * s.channels];
    for c in 0..s.channels {
        for b in 0..s.batch {
            let sum: T = h[c * s.plane() + b * hw..][..hw].iter().copied().sum();
            out[b * s.channels + c] = sum * inv;
        }
    }
    out
}
