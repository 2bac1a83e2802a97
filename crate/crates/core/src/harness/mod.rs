//! Configuration and the commands behind the `fairsinkhorn` binary.

pub mod commands;
pub mod config;
pub mod train;

pub use commands::{
    cmd_compare, cmd_generate, cmd_probe, cmd_train, cmd_zeroshot, load_splits, RunOptions,
};
pub use config::{Mode, Overrides, RunConfig};
pub use train::{train_model, EvalRecord, StepRecord, TrainOutcome};

/// File name of the checkpoint written after the last epoch.
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.bin";
