/// Central-difference gradient of `loss_fn` at `params`.
pub fn numerical_gradient<F>(mut loss_fn: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = loss_fn(&probe);
            probe[i] = orig - step;
            let minus = loss_fn(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Largest per-coordinate relative error between `analytic_grad` and a
/// central-difference estimate, using `max(|a|, |b|, 1e-8)` as denominator.
pub fn finite_difference_check<F>(loss_fn: F, params: &[f64], analytic_grad: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic_grad.len(), "gradient length mismatch");
    let numeric = numerical_gradient(loss_fn, params, step);
    numeric
        .iter()
        .zip(analytic_grad)
        .map(|(&n, &a)| (n - a).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}
