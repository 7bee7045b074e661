use serde::{Deserialize, Serialize};

use super::{Gradients, MlpModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Global-norm clip threshold.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub momentum: f64,
}

impl SgdConfig {
    pub fn plain(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            grad_clip: None,
            momentum: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip > 0.0 && clip.is_finite()) {
                return Err(Error::Config(format!("grad_clip must be > 0, got {clip}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Stochastic gradient descent with optional momentum and global-norm clipping.
///
/// Update: `v ← μ·v + g'` and `θ ← θ − η·v`, where `g'` is `g` rescaled by
/// `clip / ‖g‖` when `‖g‖ > clip`.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, velocity: None })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    /// Applies one update in place. Returns the gradient norm before clipping.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<f64> {
        let expected = Gradients::zeros_like(model);
        let shapes_match = expected.weights.len() == grads.weights.len()
            && expected
                .weights
                .iter()
                .zip(&grads.weights)
                .all(|(a, b)| a.shape() == b.shape())
            && expected
                .biases
                .iter()
                .zip(&grads.biases)
                .all(|(a, b)| a.len() == b.len());
        if !shapes_match {
            return Err(Error::Domain("gradient shapes do not match model parameters".into()));
        }

        let norm = grads.global_norm();
        let scale = match self.cfg.grad_clip {
            Some(clip) if norm > clip => clip / norm,
            _ => 1.0,
        };
        let lr = self.cfg.learning_rate;
        let momentum = self.cfg.momentum;
        let (weights, biases) = model.params_mut();

        if momentum == 0.0 {
            for (w, g) in weights.iter_mut().zip(&grads.weights) {
                for (p, &d) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *p -= lr * (scale * d);
                }
            }
            for (b, g) in biases.iter_mut().zip(&grads.biases) {
                for (p, &d) in b.iter_mut().zip(g) {
                    *p -= lr * (scale * d);
                }
            }
        } else {
            let velocity = self.velocity.get_or_insert(expected);
            for ((w, g), v) in weights.iter_mut().zip(&grads.weights).zip(velocity.weights.iter_mut()) {
                for ((p, &d), vel) in w.as_mut_slice().iter_mut().zip(g.as_slice()).zip(v.as_mut_slice()) {
                    *vel = momentum * *vel + scale * d;
                    *p -= lr * *vel;
                }
            }
            for ((b, g), v) in biases.iter_mut().zip(&grads.biases).zip(velocity.biases.iter_mut()) {
                for ((p, &d), vel) in b.iter_mut().zip(g).zip(v.iter_mut()) {
                    *vel = momentum * *vel + scale * d;
                    *p -= lr * *vel;
                }
            }
        }

        let finite = weights.iter().all(|w| w.as_slice().iter().all(|v| v.is_finite()))
            && biases.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("sgd step"));
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, Activation, MlpSpec};
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn scalar_model(x0: f64) -> MlpModel {
        let mut m = init_model(&MlpSpec::new(1, vec![], 1, Activation::Relu), 0).unwrap();
        m.set_flat_params(&[x0, 0.0]).unwrap();
        m
    }

    fn grads_for(m: &MlpModel, flat: &[f64]) -> Gradients {
        let mut g = Gradients::zeros_like(m);
        let mut offset = 0;
        for (w, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
            let n = w.as_slice().len();
            *w = Matrix::new(w.rows(), w.cols(), flat[offset..offset + n].to_vec()).unwrap();
            offset += n;
            let len = b.len();
            b.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        g
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut m = init_model(&MlpSpec::new(3, vec![4], 2, Activation::Tanh), 5).unwrap();
        let before = m.parameter_bits();
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 0.5,
            grad_clip: Some(1.0),
            momentum: 0.9,
        })
        .unwrap();
        let g = Gradients::zeros_like(&m);
        sgd.step(&mut m, &g).unwrap();
        sgd.step(&mut m, &g).unwrap();
        assert_eq!(m.parameter_bits(), before);
    }

    #[test]
    fn one_dimensional_quadratic() {
        // ½x² has gradient x; one step from 1 with η = 0.1 lands on 0.9.
        let mut m = scalar_model(1.0);
        let g = grads_for(&m, &[1.0, 0.0]);
        Sgd::new(SgdConfig::plain(0.1)).unwrap().step(&mut m, &g).unwrap();
        assert!((m.flat_params()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn clipping_bounds_the_update() {
        let mut m = init_model(&MlpSpec::new(2, vec![2], 2, Activation::Relu), 1).unwrap();
        let n = m.parameter_count();
        let raw: Vec<f64> = (0..n)
            .map(|i| (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let flat: Vec<f64> = raw.iter().map(|v| v * 10.0 / norm).collect();
        let g = grads_for(&m, &flat);
        assert!((g.global_norm() - 10.0).abs() < 1e-12);
        let before = m.flat_params();
        let lr = 0.3;
        Sgd::new(SgdConfig {
            learning_rate: lr,
            grad_clip: Some(1.0),
            momentum: 0.0,
        })
        .unwrap()
        .step(&mut m, &g)
        .unwrap();
        let update: f64 = m
            .flat_params()
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((update - lr * 1.0).abs() < 1e-12, "{update}");
    }

    #[test]
    fn momentum_accumulates() {
        let mut m = scalar_model(0.0);
        let g = grads_for(&m, &[1.0, 0.0]);
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 1.0,
            grad_clip: None,
            momentum: 0.5,
        })
        .unwrap();
        sgd.step(&mut m, &g).unwrap();
        sgd.step(&mut m, &g).unwrap();
        // v1 = 1, v2 = 1.5
        assert!((m.flat_params()[0] + 2.5).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::plain(0.0).validate().is_err());
        assert!(SgdConfig {
            learning_rate: 0.1,
            grad_clip: Some(-1.0),
            momentum: 0.0
        }
        .validate()
        .is_err());
        assert!(SgdConfig {
            learning_rate: 0.1,
            grad_clip: None,
            momentum: 1.0
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn clipped_update_never_exceeds_lr_times_clip(
            grads in prop::collection::vec(-100.0f64..100.0, 9),
            lr in 0.001f64..2.0,
            clip in 0.01f64..5.0,
        ) {
            let mut m = init_model(&MlpSpec::new(2, vec![2], 1, Activation::Tanh), 3).unwrap();
            let g = grads_for(&m, &grads);
            let before = m.flat_params();
            Sgd::new(SgdConfig { learning_rate: lr, grad_clip: Some(clip), momentum: 0.0 })
                .unwrap()
                .step(&mut m, &g)
                .unwrap();
            let update: f64 = m.flat_params().iter().zip(&before).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(update <= lr * clip * (1.0 + 1e-9));
        }
    }
}
