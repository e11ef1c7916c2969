//! Loss, optimizer, checkpoints and the epoch loop.

mod adam;
mod checkpoint;
mod loss;
mod trainer;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use checkpoint::{Checkpoint, CheckpointVocabs, NamedTensor, VocabHashes, SCHEMA_VERSION};
pub use loss::{output_probs, sequence_loss};
pub use trainer::{evaluate, EpochStats, TrainConfig, Trainer};
