//! Dataset and model persistence.
//!
//! Both datasets and checkpoints are directories holding `manifest.toml`
//! and one raw little-endian `float32` file per array. The manifest records
//! `format`, `version`, and for each array its `name`, `file`, `dtype`,
//! `byte_order`, and `shape`.

mod bundle_io;
mod checkpoint;
mod container;
mod types;

pub use bundle_io::{
    load_dataset, load_manifest, save_dataset, save_dataset_with_fingerprint, DatasetManifest, TrajectoryEntry,
    DATASET_FORMAT, DATASET_VERSION,
};
pub use checkpoint::{
    load_checkpoint, restore_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, Stage, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use container::{read_array, read_manifest, write_array, write_dir_atomic, write_manifest, ArrayEntry, MANIFEST};
pub use types::{denormalize, normalize, DatasetBundle, FieldSnapshot, Norm, Splits, Trajectory, Window};
