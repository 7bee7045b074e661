use serde::{Deserialize, Serialize};

use crate::numerics::{cross_entropy, kl_divergence, mse_logits, softmax_rows, LossGrad, Matrix};
use crate::{Error, Result};

/// Weights of the classic KD objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanillaKdConfig {
    /// Weight on the hard-label cross entropy; the KD term gets `1 - alpha`.
    pub alpha: f64,
    pub temperature: f64,
}

impl Default for VanillaKdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 4.0,
        }
    }
}

impl VanillaKdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "vanilla KD alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "vanilla KD temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `alpha · CE(y, σ(z_s)) + (1 − alpha) · T² · KL(σ(z_t/T) ‖ σ(z_s/T))`, batch mean.
pub fn vanilla_kd_loss(labels: &Matrix, z_s: &Matrix, z_t: &Matrix, cfg: &VanillaKdConfig) -> Result<LossGrad> {
    cfg.validate()?;
    if z_s.shape() != z_t.shape() {
        return Err(Error::shape("vanilla_kd_loss", z_s.shape(), z_t.shape()));
    }
    let hard = cross_entropy(labels, &softmax_rows(z_s, 1.0)?)?;

    let t = cfg.temperature;
    let p_teacher = softmax_rows(z_t, t)?;
    let p_student = softmax_rows(z_s, t)?;
    let kl = kl_divergence(&p_teacher, &p_student)?;
    // d/dz_s [T² KL(p_t ‖ σ(z_s/T))] = T (σ(z_s/T) − p_t), per row.
    let soft_grad = p_student.sub(&p_teacher)?.scale(t / z_s.rows() as f64);

    let alpha = cfg.alpha;
    let loss = alpha * hard.loss + (1.0 - alpha) * t * t * kl;
    let grad = hard.grad.scale(alpha).add(&soft_grad.scale(1.0 - alpha))?;
    Ok(LossGrad { loss, grad })
}

/// Logit regression onto the temperature-attenuated teacher: `mse(z_s, z_t / T)`.
pub fn prokd_phase1_loss(z_s: &Matrix, z_t: &Matrix, temperature: u32) -> Result<LossGrad> {
    if temperature < 1 {
        return Err(Error::Domain("phase I temperature must be >= 1".into()));
    }
    if temperature == 1 {
        return mse_logits(z_s, z_t);
    }
    mse_logits(z_s, &z_t.scale(1.0 / f64::from(temperature)))
}

/// Annealing-KD regression target `z_t · (i / tau_max)` for step `i` in `1..=tau_max`.
pub fn annealing_target(z_t_final: &Matrix, step: u32, tau_max: u32) -> Result<Matrix> {
    if tau_max < 1 || step < 1 || step > tau_max {
        return Err(Error::Domain(format!("annealing step {step} outside 1..={tau_max}")));
    }
    if step == tau_max {
        return Ok(z_t_final.clone());
    }
    Ok(z_t_final.scale(f64::from(step) / f64::from(tau_max)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_check, one_hot};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logits(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-4.0..4.0))
    }

    #[test]
    fn identical_logits_without_hard_term_is_zero() {
        let z = logits(4, 3, 1);
        let labels = one_hot(&[0, 1, 2, 0], 3).unwrap();
        let lg = vanilla_kd_loss(
            &labels,
            &z,
            &z,
            &VanillaKdConfig {
                alpha: 0.0,
                temperature: 3.0,
            },
        )
        .unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.as_slice().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn alpha_one_is_cross_entropy() {
        let z_s = logits(5, 4, 2);
        let z_t = logits(5, 4, 3);
        let labels = one_hot(&[3, 1, 2, 0, 0], 4).unwrap();
        let kd = vanilla_kd_loss(
            &labels,
            &z_s,
            &z_t,
            &VanillaKdConfig {
                alpha: 1.0,
                temperature: 2.0,
            },
        )
        .unwrap();
        let ce = cross_entropy(&labels, &softmax_rows(&z_s, 1.0).unwrap()).unwrap();
        assert!((kd.loss - ce.loss).abs() <= 1e-15);
        assert_eq!(kd.grad, ce.grad);
    }

    #[test]
    fn two_class_hand_instance() {
        // 0.5·CE + 0.5·4·KL for z_s = [0.3, -0.2], z_t = [1.5, -0.5], y = 0, at 40 digits.
        let z_s = Matrix::from_rows(&[vec![0.3, -0.2]]).unwrap();
        let z_t = Matrix::from_rows(&[vec![1.5, -0.5]]).unwrap();
        let labels = one_hot(&[0], 2).unwrap();
        let cfg = VanillaKdConfig {
            alpha: 0.5,
            temperature: 2.0,
        };
        let lg = vanilla_kd_loss(&labels, &z_s, &z_t, &cfg).unwrap();
        assert!((lg.loss - 0.358_981_824_756_302_1).abs() < 1e-14, "{}", lg.loss);

        let loss = |flat: &[f64]| {
            vanilla_kd_loss(&labels, &Matrix::new(1, 2, flat.to_vec()).unwrap(), &z_t, &cfg)
                .unwrap()
                .loss
        };
        let err = finite_difference_check(loss, z_s.as_slice(), lg.grad.as_slice(), 1e-5);
        assert!(err <= 1e-6, "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn vanilla_gradient_passes_finite_differences(
            seed in 0u64..5000,
            alpha in 0.0f64..=1.0,
            t in 1.0f64..8.0,
        ) {
            let z_s = logits(4, 3, seed);
            let z_t = logits(4, 3, seed + 7);
            let labels = one_hot(&[0, 2, 1, 1], 3).unwrap();
            let cfg = VanillaKdConfig { alpha, temperature: t };
            let lg = vanilla_kd_loss(&labels, &z_s, &z_t, &cfg).unwrap();
            let loss = |flat: &[f64]| {
                vanilla_kd_loss(&labels, &Matrix::new(4, 3, flat.to_vec()).unwrap(), &z_t, &cfg).unwrap().loss
            };
            let err = finite_difference_check(loss, z_s.as_slice(), lg.grad.as_slice(), 1e-5);
            prop_assert!(err <= 1e-6, "err {}", err);
        }

        #[test]
        fn phase1_scales_quadratically(seed in 0u64..5000, c in -5.0f64..5.0, t in 1u32..10) {
            let z_s = logits(3, 4, seed);
            let z_t = logits(3, 4, seed + 1);
            let base = prokd_phase1_loss(&z_s, &z_t, t).unwrap().loss;
            let scaled = prokd_phase1_loss(&z_s.scale(c), &z_t.scale(c), t).unwrap().loss;
            prop_assert!((scaled - c * c * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
        }

        #[test]
        fn temperature_never_reorders(row in prop::collection::vec(-20.0f64..20.0, 2..8), t in 0.05f64..50.0) {
            let z = Matrix::row_vector(row).unwrap();
            let p = softmax_rows(&z, t).unwrap();
            // ties among distinct logits can only appear through underflow
            let pa = p.argmax_row(0);
            prop_assert!(z.get(0, pa) == z.get(0, z.argmax_row(0)));
        }
    }

    #[test]
    fn phase1_fixed_point_and_analytic_value() {
        let z = logits(3, 4, 5);
        assert_eq!(prokd_phase1_loss(&z, &z, 1).unwrap().loss, 0.0);

        let v = Matrix::from_rows(&[vec![1.0, 2.0, -2.0], vec![1.0, 2.0, -2.0]]).unwrap();
        let lg = prokd_phase1_loss(&Matrix::zeros(2, 3), &v.scale(7.0), 7).unwrap();
        assert!((lg.loss - 9.0).abs() < 1e-12);
        assert!(matches!(prokd_phase1_loss(&z, &z, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn phase1_target_norm_scales_inverse_to_temperature() {
        // With a zero student the loss equals the target's squared norm.
        let z_t = logits(6, 3, 9);
        let zero = Matrix::zeros(6, 3);
        let at_one = prokd_phase1_loss(&zero, &z_t, 1).unwrap().loss.sqrt();
        let at_seven = prokd_phase1_loss(&zero, &z_t, 7).unwrap().loss.sqrt();
        assert!((at_seven - at_one / 7.0).abs() <= 1e-12);
    }

    #[test]
    fn annealing_targets() {
        let z = logits(3, 3, 4);
        assert_eq!(annealing_target(&z, 5, 5).unwrap(), z);
        let first = annealing_target(&z, 1, 5).unwrap();
        assert!(first.max_abs_diff(&z.scale(0.2)) <= 1e-15);
        assert!(annealing_target(&z, 0, 5).is_err());
        assert!(annealing_target(&z, 6, 5).is_err());
        let norms: Vec<f64> = (1..=5)
            .map(|i| annealing_target(&z, i, 5).unwrap().frobenius_norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn config_validation() {
        assert!(VanillaKdConfig {
            alpha: 1.5,
            temperature: 1.0
        }
        .validate()
        .is_err());
        assert!(VanillaKdConfig {
            alpha: 0.5,
            temperature: 0.0
        }
        .validate()
        .is_err());
        assert!(VanillaKdConfig::default().validate().is_ok());
    }
}
