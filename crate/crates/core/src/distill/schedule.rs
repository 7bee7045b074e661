use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `[tau_max, tau_max - 1, ..., 1]`.
pub fn temperature_sequence(tau_max: u32) -> Result<Vec<u32>> {
    if tau_max < 1 {
        return Err(Error::Domain("tau_max must be >= 1".into()));
    }
    Ok((1..=tau_max).rev().collect())
}

/// Splits `total` student epochs over `tau_max` temperature steps.
///
/// With `increment_factor == 1` every step gets `total / tau_max` epochs and
/// the division must be exact. With `f > 1` the counts grow geometrically,
/// `n[i+1] = f * n[i]`, from the largest `n[0]` whose series fits in `total`;
/// whatever is left over goes to the last step.
pub fn allocate_epochs(tau_max: u32, total: usize, increment_factor: u32) -> Result<Vec<usize>> {
    if tau_max < 1 {
        return Err(Error::Allocation("tau_max must be >= 1".into()));
    }
    if increment_factor < 1 {
        return Err(Error::Allocation("increment_factor must be >= 1".into()));
    }
    let steps = tau_max as usize;
    if total < steps {
        return Err(Error::Allocation(format!(
            "{total} epochs cannot give each of {steps} temperature steps at least one epoch"
        )));
    }
    if increment_factor == 1 {
        if !total.is_multiple_of(steps) {
            return Err(Error::Allocation(format!(
                "{total} epochs do not divide evenly over {steps} steps with increment factor 1"
            )));
        }
        return Ok(vec![total / steps; steps]);
    }

    let f = increment_factor as usize;
    // Σ f^k for k < steps, saturating on overflow.
    let mut series = 0usize;
    let mut term = 1usize;
    for _ in 0..steps {
        series = series.saturating_add(term);
        term = term.saturating_mul(f);
    }
    if series > total {
        return Err(Error::Allocation(format!(
            "geometric growth by {f} over {steps} steps needs at least {series} epochs, have {total}"
        )));
    }
    let first = total / series;
    let mut epochs = Vec::with_capacity(steps);
    let mut n = first;
    for _ in 0..steps {
        epochs.push(n);
        n *= f;
    }
    let remainder = total - first * series;
    *epochs.last_mut().expect("steps >= 1") += remainder;
    Ok(epochs)
}

/// Temperatures `tau_max..=1` paired with per-step epoch counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct TemperatureSchedule {
    tau_max: u32,
    per_step_epochs: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    tau_max: u32,
    per_step_epochs: Vec<usize>,
}

impl TryFrom<RawSchedule> for TemperatureSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        TemperatureSchedule::with_epochs(raw.tau_max, raw.per_step_epochs)
    }
}

impl TemperatureSchedule {
    /// Allocates `total` epochs with [`allocate_epochs`].
    pub fn new(tau_max: u32, total: usize, increment_factor: u32) -> Result<Self> {
        let per_step_epochs = allocate_epochs(tau_max, total, increment_factor)?;
        Ok(Self {
            tau_max,
            per_step_epochs,
        })
    }

    /// A schedule with hand-picked per-step epoch counts.
    pub fn with_epochs(tau_max: u32, per_step_epochs: Vec<usize>) -> Result<Self> {
        if tau_max < 1 {
            return Err(Error::Allocation("tau_max must be >= 1".into()));
        }
        if per_step_epochs.len() != tau_max as usize {
            return Err(Error::Allocation(format!(
                "expected {tau_max} per-step epoch counts, got {}",
                per_step_epochs.len()
            )));
        }
        if per_step_epochs.contains(&0) {
            return Err(Error::Allocation(
                "every temperature step needs at least one epoch".into(),
            ));
        }
        Ok(Self {
            tau_max,
            per_step_epochs,
        })
    }

    pub fn tau_max(&self) -> u32 {
        self.tau_max
    }

    pub fn per_step_epochs(&self) -> &[usize] {
        &self.per_step_epochs
    }

    /// `N`, the Phase I budget.
    pub fn total_epochs(&self) -> usize {
        self.per_step_epochs.iter().sum()
    }

    pub fn temperatures(&self) -> Vec<u32> {
        (1..=self.tau_max).rev().collect()
    }

    /// `(step index from 1, temperature, epochs)` in training order.
    pub fn steps(&self) -> impl Iterator<Item = (usize, u32, usize)> + '_ {
        self.per_step_epochs
            .iter()
            .enumerate()
            .map(move |(k, &n)| (k + 1, self.tau_max - k as u32, n))
    }
}
