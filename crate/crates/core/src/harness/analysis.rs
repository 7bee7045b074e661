use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NtkConfig;
use crate::nn::{init_model, MlpSpec};
use crate::ntk::{compute_gram, rate_ordering_report, trace_projections, MlpTangent, OrderingReport, ProjectionTrace};
use crate::numerics::{symmetric_eigen, Matrix};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkReport {
    pub config: NtkConfig,
    pub parameter_count: usize,
    pub eta: f64,
    pub gram_eigenvalues: Vec<f64>,
    pub traces: Vec<ProjectionTrace>,
    /// `‖H_t − H_0‖_F / ‖H_0‖_F` per step.
    pub drift: Vec<f64>,
    pub residual_norms: Vec<f64>,
    /// Max relative error against the fixed-kernel prediction, first `top_k` directions.
    pub relative_errors: Vec<f64>,
    pub within_tolerance: bool,
    pub ordering: OrderingReport,
    pub warnings: Vec<String>,
}

/// Gradient descent of a fresh one-hidden-layer network on random probes
/// (entries uniform in [-1, 1]) towards random targets in [-1, 1].
pub fn run_ntk_analysis(cfg: &NtkConfig) -> Result<NtkReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let probes = Matrix::from_fn(cfg.n_probes, cfg.input_dim, |_, _| rng.random_range(-1.0..1.0));
    let targets: Vec<f64> = (0..cfg.n_probes).map(|_| rng.random_range(-1.0..1.0)).collect();

    let spec = MlpSpec::new(cfg.input_dim, vec![cfg.width], cfg.n_outputs, cfg.activation);
    let model = init_model(&spec, cfg.seed)?;
    let parameter_count = model.parameter_count();
    let tangent = match cfg.output_unit {
        Some(unit) => MlpTangent::unit(model, unit)?,
        None => MlpTangent::scalar(model)?,
    };
    let gram = compute_gram(&tangent, &probes)?;
    let lambda_max = symmetric_eigen(&gram.matrix)?.eigenvalues[0];
    let eta = cfg.eta_scale / lambda_max;

    let analysis = trace_projections(&tangent, &probes, &targets, eta, cfg.steps)?;
    let relative_errors = analysis.relative_errors(cfg.top_k, cfg.steps);
    let ordering = rate_ordering_report(&analysis.traces, cfg.max_inversions);
    Ok(NtkReport {
        config: cfg.clone(),
        parameter_count,
        eta,
        within_tolerance: relative_errors.iter().all(|&e| e <= cfg.tolerance),
        relative_errors,
        gram_eigenvalues: analysis.eigenvalues,
        traces: analysis.traces,
        drift: analysis.drift,
        residual_norms: analysis.residual_norms,
        ordering,
        warnings: analysis.warnings,
    })
}
