//! The learned merger: a fully-connected network with hand-written forward
//! and backward passes, BCE loss, Adam, a step learning-rate schedule and a
//! binary checkpoint format.

mod checkpoint;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointManifest,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{bce_loss, sigmoid, BCE_EPSILON};
pub use model::{backward_and_step, Gradients, MlpModel, Mode, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
pub use optim::{step_lr, Adam};
pub use train::{train, EpochLog, TrainConfig, TrainOutcome};
