#![allow(dead_code)]

use distill_core::harness::{gen_synthetic, CapacityGapBenchmark, Dataset};
use distill_core::nn::{Activation, MlpModel, MlpSpec, SgdConfig};
use distill_core::numerics::Matrix;
use distill_core::trainers::{train_teacher, RunSettings, RunSink, TeacherRun};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_benchmark() -> CapacityGapBenchmark {
    CapacityGapBenchmark {
        n_classes: 3,
        input_dim: 4,
        cluster_spread: 0.6,
        label_noise_rate: 0.1,
        clusters_per_class: 1,
        train_samples: 120,
        dev_samples: 40,
        test_samples: 40,
        data_seed: 0,
        seeds: vec![1, 2],
    }
}

pub fn small_data() -> Dataset {
    gen_synthetic(&small_benchmark(), 17).unwrap()
}

pub fn settings(seed: u64) -> RunSettings {
    RunSettings {
        sgd: SgdConfig {
            learning_rate: 0.1,
            grad_clip: Some(1.0),
            momentum: 0.9,
        },
        batch_size: 16,
        seed,
    }
}

pub fn teacher_spec() -> MlpSpec {
    MlpSpec::new(4, vec![24, 24], 3, Activation::Relu)
}

pub fn assistant_spec() -> MlpSpec {
    MlpSpec::new(4, vec![10], 3, Activation::Relu)
}

pub fn student_spec() -> MlpSpec {
    MlpSpec::new(4, vec![4], 3, Activation::Relu)
}

pub fn teacher(data: &Dataset, epochs: usize) -> TeacherRun {
    train_teacher(&teacher_spec(), data, epochs, &settings(99), &mut RunSink::none()).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Gradient of output `unit` by forward-mode differentiation, one tangent
/// pass per parameter. Shares nothing with the reverse-mode code.
pub fn forward_mode_gradient(model: &MlpModel, x: &[f64], unit: usize) -> Vec<f64> {
    let spec = model.spec();
    let act = |v: f64| match spec.activation {
        Activation::Tanh => v.tanh(),
        Activation::Relu => v.max(0.0),
    };
    let dact = |v: f64| match spec.activation {
        Activation::Tanh => 1.0 - v.tanh().powi(2),
        Activation::Relu => f64::from(u8::from(v > 0.0)),
    };
    let n_layers = model.weights().len();
    let mut grad = Vec::with_capacity(model.parameter_count());
    for (layer, (w, b)) in model.weights().iter().zip(model.biases()).enumerate() {
        let n_params = w.rows() * w.cols() + b.len();
        for p in 0..n_params {
            let mut a = x.to_vec();
            let mut da = vec![0.0; x.len()];
            for (k, (wk, bk)) in model.weights().iter().zip(model.biases()).enumerate() {
                let mut h = bk.clone();
                let mut dh = vec![0.0; bk.len()];
                for j in 0..wk.cols() {
                    for i in 0..wk.rows() {
                        h[j] += a[i] * wk.get(i, j);
                        dh[j] += da[i] * wk.get(i, j);
                    }
                }
                if k == layer {
                    if p < w.rows() * w.cols() {
                        let (i, j) = (p / w.cols(), p % w.cols());
                        dh[j] += a[i];
                    } else {
                        dh[p - w.rows() * w.cols()] += 1.0;
                    }
                }
                if k + 1 == n_layers {
                    a = h;
                    da = dh;
                } else {
                    da = dh.iter().zip(&h).map(|(d, &v)| d * dact(v)).collect();
                    a = h.into_iter().map(act).collect();
                }
            }
            grad.push(da[unit]);
        }
    }
    grad
}
