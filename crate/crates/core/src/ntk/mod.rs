//! Empirical neural tangent kernel and the per-eigendirection decay of the
//! training residual under gradient descent.
//!
//! For a scalar model `f(θ, x)` on probes `x₁..xₙ`, the kernel is
//! `H = J Jᵀ` with `J` the `n × P` matrix of parameter gradients. Gradient
//! descent on `½‖u − y‖²` moves the residual as `r_{t+1} ≈ (I − ηH) r_t`, so
//! its component along eigenvector `eᵢ` shrinks by `(1 − ηλᵢ)` per step. The
//! relation is exact for models linear in θ.

mod gram;
mod model;
mod trace;

pub use gram::{compute_gram, gram_from_jacobian, jacobian, GramMatrix, MAX_PROBES};
pub use model::{LinearModel, MlpTangent, TangentModel};
pub use trace::{
    rate_ordering_report, trace_projections, HalfLife, OrderingReport, ProjectionAnalysis, ProjectionStep,
    ProjectionTrace,
};
