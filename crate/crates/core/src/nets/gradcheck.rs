//! Finite-difference verification of analytic gradients in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelGrads, ModelState};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    /// Parameters sampled per block (all of them if the block is smaller).
    pub per_block: usize,
    /// Denominator floor for the relative error, so that vanishing gradients
    /// are compared in absolute terms.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tolerance: 1e-4,
            step: 1e-6,
            per_block: 8,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
    /// Parameters skipped because the loss has a kink (ReLU switch) within one step.
    pub skipped_kinks: usize,
    pub max_abs_grad: f64,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.blocks.iter().map(|b| b.checked).sum()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst_block(&self) -> Option<&BlockReport> {
        self.blocks.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    /// `Err(GradientMismatch)` naming the worst block when the check fails.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let w = self.worst_block().expect("failing report has blocks");
        Err(Error::GradientMismatch {
            block: w.name.clone(),
            rel_err: w.max_rel_err,
            tolerance: self.tolerance,
        })
    }
}

#[derive(Clone, Copy)]
enum Net {
    Encoder,
    Decoder,
    OdeFunc,
}

fn param_mut(state: &mut ModelState<f64>, net: Net, block: usize, i: usize) -> &mut f64 {
    let ps = match net {
        Net::Encoder => &mut state.encoder.params,
        Net::Decoder => &mut state.decoder.params,
        Net::OdeFunc => &mut state.odefunc.params,
    };
    &mut ps.blocks[block].data[i]
}

/// Compares the analytic gradient from `loss_fn` with central differences on
/// a random subset of every parameter block.
///
/// `loss_fn(state, grads)` returns the loss and, when `grads` is given,
/// accumulates `dL/dparams` into it.
pub fn check_gradients<F>(state: &ModelState<f64>, loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&ModelState<f64>, Option<&mut ModelGrads<f64>>) -> Result<f64>,
{
    let mut grads = state.zero_grads();
    let l0 = loss_fn(state, Some(&mut grads))?;
    let mut work = state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut blocks = Vec::new();
    let mut skipped = 0;
    let mut max_abs_grad = 0.0f64;
    let h = opts.step;
    for (net, gset) in [
        (Net::Encoder, &grads.encoder),
        (Net::Decoder, &grads.decoder),
        (Net::OdeFunc, &grads.odefunc),
    ] {
        for (bi, gb) in gset.blocks.iter().enumerate() {
            let n = gb.data.len();
            let picks = sample(&mut rng, n, opts.per_block.min(n));
            let mut rep = BlockReport {
                name: gb.name.clone(),
                checked: 0,
                max_rel_err: 0.0,
            };
            for i in picks.iter() {
                let p0 = *param_mut(&mut work, net, bi, i);
                *param_mut(&mut work, net, bi, i) = p0 + h;
                let lp = loss_fn(&work, None)?;
                *param_mut(&mut work, net, bi, i) = p0 - h;
                let lm = loss_fn(&work, None)?;
                *param_mut(&mut work, net, bi, i) = p0;
                let fwd = (lp - l0) / h;
                let bwd = (l0 - lm) / h;
                let num = (lp - lm) / (2.0 * h);
                let ana = gb.data[i];
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(opts.floor);
                // At a kink the one-sided slopes disagree by more than the
                // analytic/numeric gap; a wrong gradient shows the opposite.
                if rel >= opts.tolerance && (fwd - bwd).abs() >= (ana - num).abs() {
                    skipped += 1;
                    continue;
                }
                max_abs_grad = max_abs_grad.max(ana.abs());
                rep.max_rel_err = rep.max_rel_err.max(rel);
                rep.checked += 1;
            }
            blocks.push(rep);
        }
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        blocks,
        skipped_kinks: skipped,
        max_abs_grad,
    })
}
