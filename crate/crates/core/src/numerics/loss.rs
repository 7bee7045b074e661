use super::Matrix;
use crate::{Error, Result};

/// Probabilities are clipped to this floor before any logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// A batch-mean loss value and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Matrix,
}

/// Tempered softmax of one row, computed with max subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("softmax over non-finite logits".into()));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, temperature, &mut out);
    Ok(out)
}

/// Row-wise tempered softmax.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    check_temperature(temperature)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        softmax_into(logits.row(r), temperature, out.row_mut(r));
    }
    Ok(out)
}

fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "temperature must be positive, got {temperature}"
        )))
    }
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), n_classes);
    for (r, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::Domain(format!("label {label} outside 0..{n_classes}")));
        }
        m.set(r, label, 1.0);
    }
    Ok(m)
}

/// Mean cross entropy between target rows and predicted probabilities.
///
/// The gradient is taken with respect to the logits that produced `probs`
/// through an untempered softmax: `(probs - labels) / batch`.
pub fn cross_entropy(labels: &Matrix, probs: &Matrix) -> Result<LossGrad> {
    if labels.shape() != probs.shape() {
        return Err(Error::shape("cross_entropy", labels.shape(), probs.shape()));
    }
    check_normalized("cross_entropy", probs, 1e-9)?;
    let batch = probs.rows() as f64;
    let mut total = 0.0;
    for (&y, &p) in labels.as_slice().iter().zip(probs.as_slice()) {
        if y != 0.0 {
            total -= y * p.max(PROB_FLOOR).ln();
        }
    }
    let grad = probs.sub(labels)?.scale(1.0 / batch);
    Ok(LossGrad {
        loss: total / batch,
        grad,
    })
}

/// Mean over rows of `Σ p ln(p / q)`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::shape("kl_divergence", p.shape(), q.shape()));
    }
    check_normalized("kl_divergence", p, 1e-9)?;
    check_normalized("kl_divergence", q, 1e-9)?;
    let mut total = 0.0;
    for (&pi, &qi) in p.as_slice().iter().zip(q.as_slice()) {
        if pi > 0.0 {
            total += pi * (pi.max(PROB_FLOOR) / qi.max(PROB_FLOOR)).ln();
        }
    }
    // Gibbs' inequality; rounding can leave a tiny negative residue.
    Ok((total / p.rows() as f64).max(0.0))
}

/// Mean over the batch of the squared 2-norm of each row difference.
pub fn mse_logits(z_s: &Matrix, target: &Matrix) -> Result<LossGrad> {
    if z_s.shape() != target.shape() {
        return Err(Error::shape("mse_logits", z_s.shape(), target.shape()));
    }
    let batch = z_s.rows() as f64;
    let diff = z_s.sub(target)?;
    let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / batch;
    Ok(LossGrad {
        loss,
        grad: diff.scale(2.0 / batch),
    })
}

fn check_normalized(op: &str, probs: &Matrix, tol: f64) -> Result<()> {
    for r in 0..probs.rows() {
        let row = probs.row(r);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol || row.iter().any(|&p| p < 0.0) {
            return Err(Error::Domain(format!(
                "{op}: row {r} is not a probability distribution (sum {sum})"
            )));
        }
    }
    Ok(())
}
