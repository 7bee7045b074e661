use serde::{Deserialize, Serialize};

use super::gram::{gram_from_jacobian, jacobian, MAX_PROBES};
use super::model::TangentModel;
use crate::numerics::{dot, symmetric_eigen, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStep {
    pub t: usize,
    /// `⟨u_t − y, eᵢ⟩`.
    pub projection: f64,
    /// `(1 − ηλᵢ)ᵗ ⟨u_0 − y, eᵢ⟩`.
    pub predicted: f64,
}

/// Residual along one eigenvector of the step-0 Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTrace {
    pub eigen_index: usize,
    pub eigenvalue: f64,
    /// Contiguous from `t = 0`.
    pub steps: Vec<ProjectionStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionAnalysis {
    pub eta: f64,
    /// Step-0 Gram eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// One trace per eigendirection, descending eigenvalue.
    pub traces: Vec<ProjectionTrace>,
    /// `‖H_t − H_0‖_F / ‖H_0‖_F` for each recorded step.
    pub drift: Vec<f64>,
    /// `‖u_t − y‖` for each recorded step.
    pub residual_norms: Vec<f64>,
    pub warnings: Vec<String>,
}

fn outputs<M: TangentModel>(model: &M, probes: &Matrix) -> Result<Vec<f64>> {
    (0..probes.rows()).map(|i| model.output(probes.row(i))).collect()
}

/// Full-batch gradient descent on `½‖u − y‖²` over the probes for `steps`
/// steps, recording the residual in the eigenbasis of the initial Gram
/// matrix next to the decay that a fixed kernel predicts.
pub fn trace_projections<M: TangentModel>(
    model: &M,
    probes: &Matrix,
    targets: &[f64],
    eta: f64,
    steps: usize,
) -> Result<ProjectionAnalysis> {
    let n = probes.rows();
    if n == 0 || n > MAX_PROBES {
        return Err(Error::Domain(format!(
            "NTK probe count must lie in 1..={MAX_PROBES}, got {n}"
        )));
    }
    if targets.len() != n {
        return Err(Error::shape("trace_projections", (n, 1), (targets.len(), 1)));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }

    let mut model = model.clone();
    let mut j = jacobian(&model, probes)?;
    let h0 = gram_from_jacobian(&j);
    let h0_norm = h0.frobenius_norm();
    let eig = symmetric_eigen(&h0)?;
    let eigenvalues = eig.eigenvalues.clone();
    let basis: Vec<Vec<f64>> = (0..n).map(|i| eig.eigenvector(i)).collect();

    let mut warnings = Vec::new();
    let lambda_max = eigenvalues[0];
    if lambda_max > 0.0 && eta >= 2.0 / lambda_max {
        warnings.push(format!(
            "eta {eta} >= 2/lambda_max = {}: gradient descent is unstable along the top direction",
            2.0 / lambda_max
        ));
    }
    let lambda_min = eigenvalues[n - 1];
    if lambda_min < -1e-8 * lambda_max.max(1.0) {
        warnings.push(format!("Gram matrix has a negative eigenvalue {lambda_min}"));
    }

    let mut traces: Vec<ProjectionTrace> = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| ProjectionTrace {
            eigen_index: i,
            eigenvalue: l,
            steps: Vec::with_capacity(steps + 1),
        })
        .collect();
    let mut initial = vec![0.0; n];
    let mut drift = Vec::with_capacity(steps + 1);
    let mut residual_norms = Vec::with_capacity(steps + 1);

    for t in 0..=steps {
        let u = outputs(&model, probes)?;
        let r: Vec<f64> = u.iter().zip(targets).map(|(a, b)| a - b).collect();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trace_projections residual"));
        }
        residual_norms.push(dot(&r, &r).sqrt());
        for (i, trace) in traces.iter_mut().enumerate() {
            let projection = dot(&r, &basis[i]);
            if t == 0 {
                initial[i] = projection;
            }
            let predicted = (1.0 - eta * eigenvalues[i]).powi(t as i32) * initial[i];
            trace.steps.push(ProjectionStep {
                t,
                projection,
                predicted,
            });
        }
        if t > 0 {
            let ht = gram_from_jacobian(&j);
            let d = ht.sub(&h0)?.frobenius_norm();
            drift.push(if h0_norm > 0.0 { d / h0_norm } else { d });
        } else {
            drift.push(0.0);
        }
        if t == steps {
            break;
        }
        // θ ← θ − η Jᵀ r
        let grad = j.t_matmul(&Matrix::new(n, 1, r)?)?;
        let params: Vec<f64> = model
            .params()
            .iter()
            .zip(grad.as_slice())
            .map(|(p, g)| p - eta * g)
            .collect();
        model.set_params(&params)?;
        j = jacobian(&model, probes)?;
    }

    Ok(ProjectionAnalysis {
        eta,
        eigenvalues,
        traces,
        drift,
        residual_norms,
        warnings,
    })
}

impl ProjectionAnalysis {
    /// Largest `|actual − predicted| / |predicted|` over `t ≤ horizon` for each
    /// of the first `top_k` directions.
    pub fn relative_errors(&self, top_k: usize, horizon: usize) -> Vec<f64> {
        self.traces
            .iter()
            .take(top_k)
            .map(|trace| {
                trace
                    .steps
                    .iter()
                    .take_while(|s| s.t <= horizon)
                    .map(|s| (s.projection - s.predicted).abs() / s.predicted.abs().max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Empirical half-life of a projection trace, in steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfLife {
    Steps(f64),
    /// The projection did not shrink.
    Infinite,
    /// The projection started at zero.
    Undefined,
}

impl HalfLife {
    fn value(self) -> Option<f64> {
        match self {
            HalfLife::Steps(v) => Some(v),
            HalfLife::Infinite => Some(f64::INFINITY),
            HalfLife::Undefined => None,
        }
    }
}

/// Whether larger eigenvalues decay faster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// Per direction, same order as the traces.
    pub half_lives: Vec<HalfLife>,
    /// Pairs with a strictly larger eigenvalue but a strictly longer half-life.
    pub inversions: usize,
    /// Pairs whose eigenvalues agree to within `1e-8 · max |λ|`.
    pub ties: usize,
    pub max_inversions: usize,
    pub ordered: bool,
    /// Direction with the shortest half-life (first on ties).
    pub fastest_index: Option<usize>,
    pub notes: Vec<String>,
}

const TIE_RTOL: f64 = 1e-8;
const HALF_LIFE_RTOL: f64 = 1e-9;

/// First time `|p_t|` falls to half of `|p_0|`, interpolated geometrically
/// between steps. Traces that never halve are extrapolated from their mean
/// per-step rate.
fn half_life(trace: &ProjectionTrace, scale: f64) -> HalfLife {
    let (Some(first), Some(last)) = (trace.steps.first(), trace.steps.last()) else {
        return HalfLife::Undefined;
    };
    let p0 = first.projection.abs();
    if p0 <= 1e-12 * scale || last.t == 0 {
        return HalfLife::Undefined;
    }
    let half = p0 / 2.0;
    for w in trace.steps.windows(2) {
        let (prev, next) = (w[0].projection.abs(), w[1].projection.abs());
        if next <= half {
            let frac = if next > 0.0 {
                (prev / half).ln() / (prev / next).ln()
            } else {
                0.0
            };
            return HalfLife::Steps(w[0].t as f64 + frac);
        }
    }
    let rate = (last.projection.abs() / p0).powf(1.0 / last.t as f64);
    if rate >= 1.0 {
        HalfLife::Infinite
    } else {
        HalfLife::Steps(std::f64::consts::LN_2 / -rate.ln())
    }
}

/// Half-life per direction and the number of ordering inversions among them.
pub fn rate_ordering_report(traces: &[ProjectionTrace], max_inversions: usize) -> OrderingReport {
    let scale = traces
        .iter()
        .filter_map(|t| t.steps.first())
        .map(|s| s.projection.abs())
        .fold(0.0, f64::max);
    let half_lives: Vec<HalfLife> = traces.iter().map(|t| half_life(t, scale)).collect();

    let spectrum = traces.iter().map(|t| t.eigenvalue.abs()).fold(0.0, f64::max);
    let mut inversions = 0;
    let mut ties = 0;
    for a in 0..traces.len() {
        for b in a + 1..traces.len() {
            let (la, lb) = (traces[a].eigenvalue, traces[b].eigenvalue);
            if (la - lb).abs() <= TIE_RTOL * spectrum {
                ties += 1;
                continue;
            }
            let (Some(ha), Some(hb)) = (half_lives[a].value(), half_lives[b].value()) else {
                continue;
            };
            let (fast, slow) = if la > lb { (ha, hb) } else { (hb, ha) };
            if fast.is_finite() && fast > slow * (1.0 + HALF_LIFE_RTOL) {
                inversions += 1;
            }
        }
    }

    let fastest_index = half_lives
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.value().map(|v| (i, v)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i);

    let mut notes = Vec::new();
    // The predicted factor of the top direction is 1 − ηλ_max.
    if let Some([s0, s1, ..]) = traces.first().map(|t| t.steps.as_slice()) {
        if s0.predicted != 0.0 && s1.predicted / s0.predicted < 0.0 {
            notes.push(
                "eta * lambda_max > 1: |1 - eta*lambda| is not monotone in lambda, \
                 so larger eigenvalues need not decay faster"
                    .into(),
            );
        }
    }

    OrderingReport {
        half_lives,
        inversions,
        ties,
        max_inversions,
        ordered: inversions <= max_inversions,
        fastest_index,
        notes,
    }
}
