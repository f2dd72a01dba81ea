//! Logit-level label smoothing, max suppression, and the tooling to study
//! them at desk scale.
//!
//! - [`losses`]: cross-entropy and regularizers on a single logit vector,
//!   with closed-form gradients.
//! - [`schedules`]: per-epoch smoothing-weight and learning-rate schedules.
//! - [`model`]: a ReLU MLP with manual backpropagation and momentum SGD.
//! - [`metrics`]: feature collapse/separability, calibration, accuracy and
//!   the linear probe.
//! - [`data`]: seeded blobs, long-tail subsampling, mixup pairs, CSV/IDX IO.
//! - [`harness`]: the identity/gradient verifier, training runs, probing and
//!   multi-seed comparisons behind the `maxsup` binary.
//!
//! See `examples/` for one runnable program per capability.

pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod schedules;

pub use error::{Error, Result};
pub use losses::{
    ce_hard, ce_soft, grad_total, ls_decompose, ls_loss, maxsup_loss, smooth_label, softmax,
    total_loss, HardLabel, LogitVector, LossBreakdown, MixTarget, RegKind, RegularizerSpec,
};
