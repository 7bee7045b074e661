//! Dense linear algebra and loss functions.
//!
//! Everything here is a pure function of its inputs and works in `f64`.
//! Losses are batch means and return their gradient with respect to the
//! logits alongside the value.

mod eigen;
mod gradcheck;
mod loss;
mod matrix;

pub use eigen::{symmetric_eigen, EigenDecomposition, JACOBI_MAX_SWEEPS, JACOBI_OFF_DIAGONAL_TOL};
pub use gradcheck::{finite_difference_check, numerical_gradient};
pub use loss::{cross_entropy, kl_divergence, mse_logits, one_hot, softmax, softmax_rows, LossGrad, PROB_FLOOR};
pub(crate) use matrix::dot;
pub use matrix::{matmul, Matrix};
