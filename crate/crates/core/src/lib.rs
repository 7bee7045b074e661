//! A desk-scale distillation laboratory.
//!
//! Small dense networks are trained from scratch on synthetic or CSV data and
//! distilled with progressive teacher-synchronized KD (`pro_kd`), plus five
//! comparison methods: training from scratch, vanilla KD, teacher-assistant KD,
//! route-constrained (RCO) KD and Annealing-KD. The [`ntk`] module checks the
//! per-eigendirection residual decay law of gradient descent against an
//! empirical neural tangent kernel.
//!
//! Module map:
//! - [`numerics`]: dense matrices, losses with analytic gradients, Jacobi
//!   eigensolver and a finite-difference oracle.
//! - [`nn`]: MLPs, SGD with global-norm clipping, checkpoint files.
//! - [`distill`]: distillation losses and temperature/epoch schedules.
//! - [`trainers`]: teacher training, the six student methods and the
//!   checkpoint-search harness.
//! - [`ntk`]: empirical Gram matrices and projection traces.
//! - [`harness`]: datasets, experiment configuration, reports and the CLI.

pub mod distill;
mod error;
pub mod harness;
pub mod nn;
pub mod ntk;
pub mod numerics;
pub mod trainers;

pub use error::{Error, Result};
