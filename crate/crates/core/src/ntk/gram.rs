use serde::{Deserialize, Serialize};

use super::model::TangentModel;
use crate::numerics::{dot, Matrix};
use crate::{Error, Result};

/// Largest probe set accepted by [`compute_gram`].
pub const MAX_PROBES: usize = 200;

/// Empirical NTK on a probe set: `H[i][j] = ⟨∂f(xᵢ)/∂θ, ∂f(xⱼ)/∂θ⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub matrix: Matrix,
    /// Probe row indices, in matrix order.
    pub sample_ids: Vec<usize>,
}

/// Per-probe parameter gradients stacked as rows (`n × P`).
pub fn jacobian<M: TangentModel>(model: &M, probes: &Matrix) -> Result<Matrix> {
    let p = model.num_params();
    let mut data = Vec::with_capacity(probes.rows() * p);
    for i in 0..probes.rows() {
        data.extend(model.param_gradient(probes.row(i))?);
    }
    Matrix::new(probes.rows(), p, data)
}

/// Gram matrix of the Jacobian rows. Only the upper triangle is computed,
/// so the result is exactly symmetric.
pub fn gram_from_jacobian(j: &Matrix) -> Matrix {
    let n = j.rows();
    let mut h = Matrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = dot(j.row(a), j.row(b));
            h.set(a, b, v);
            h.set(b, a, v);
        }
    }
    h
}

pub fn compute_gram<M: TangentModel>(model: &M, probes: &Matrix) -> Result<GramMatrix> {
    if probes.rows() == 0 || probes.rows() > MAX_PROBES {
        return Err(Error::Domain(format!(
            "NTK probe count must lie in 1..={MAX_PROBES}, got {}",
            probes.rows()
        )));
    }
    let j = jacobian(model, probes)?;
    Ok(GramMatrix {
        matrix: gram_from_jacobian(&j),
        sample_ids: (0..probes.rows()).collect(),
    })
}
