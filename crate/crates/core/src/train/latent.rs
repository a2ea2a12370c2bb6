//! Latent dataset extraction with a trained stage-I encoder.

use crate::datastore::DatasetBundle;
use crate::error::Result;
use crate::infer::encode_window;
use crate::nets::{LatentTrajectory, ModelState};

/// One latent trajectory per training trajectory over the training window;
/// with `include_test`, test trajectories follow, flagged as such.
pub fn encode_dataset(model: &ModelState, bundle: &DatasetBundle, include_test: bool) -> Result<Vec<LatentTrajectory>> {
    let sp = &bundle.splits;
    let mut out = Vec::new();
    for &ti in &sp.train {
        out.push(encode_window(model, bundle, ti, sp.train_window.range())?);
    }
    if include_test {
        for &ti in &sp.test {
            let mut lat = encode_window(model, bundle, ti, sp.train_window.range())?;
            lat.test = true;
            out.push(lat);
        }
    }
    Ok(out)
}
