//! Contrastive dual-encoder training with a Sinkhorn group-fairness
//! regularizer, and the group fairness evaluation suite used to judge it.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: paired-modality samples, protected attributes, batch samplers.
//! - [`ot`]: entropic optimal transport between scalar distributions.
//! - [`contrastive`]: similarity matrix, symmetric InfoNCE and the combined
//!   fairness-regularized loss with analytic gradients.
//! - [`encoders`]: small trainable dual encoders, Adam, checkpoints.
//! - [`metrics`]: AUC, group-wise AUC, ES-AUC, DPD, DEOdds.
//! - [`synth`]: seeded generator of group-biased paired datasets.
//! - [`harness`]: configuration and the commands behind the CLI.

pub mod contrastive;
pub mod data;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod ot;
pub mod synth;

pub use error::{Error, Result};

/// Version tag written into every file this crate produces.
pub const FORMAT_VERSION: u32 = 1;
