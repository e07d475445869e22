//! Persistence: configuration, datasets, checkpoints and CSV outputs.

mod atomic;
pub mod checkpoint;
pub mod config;
pub mod dataset;

pub use atomic::atomic_write;
pub use config::{parse_list, DatasetSpec, FidExtractorKind, JaccardVariant, NewGeneKinds, Pairing, Profile, RunConfig, SynthKind};
pub use dataset::{load_idx, synth_dataset, synth_draw, Dataset};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
