use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split};
use crate::numerics::Matrix;
use crate::{Error, Result};

fn default_clusters_per_class() -> usize {
    1
}

/// Gaussian-mixture classification task.
///
/// Every class owns `clusters_per_class` centroids drawn from `N(0, I)`;
/// a sample picks its class uniformly, then one of that class's centroids,
/// and adds `N(0, cluster_spread² I)` noise. A `label_noise_rate` fraction of
/// the training labels is reassigned to a different class; dev and test
/// labels are clean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityGapBenchmark {
    pub n_classes: usize,
    pub input_dim: usize,
    pub cluster_spread: f64,
    pub label_noise_rate: f64,
    #[serde(default = "default_clusters_per_class")]
    pub clusters_per_class: usize,
    pub train_samples: usize,
    pub dev_samples: usize,
    pub test_samples: usize,
    /// Seed used to draw the dataset itself.
    pub data_seed: u64,
    /// Canonical run seeds for experiments on this benchmark.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl CapacityGapBenchmark {
    /// 4 classes of 8 clusters each in 16 dimensions, 10% label noise,
    /// 4000/500/500 samples, seeds 1..=10.
    pub fn canonical() -> Self {
        Self {
            n_classes: 4,
            input_dim: 16,
            cluster_spread: 1.0,
            label_noise_rate: 0.1,
            clusters_per_class: 8,
            train_samples: 4000,
            dev_samples: 500,
            test_samples: 500,
            data_seed: 2024,
            seeds: (1..=10).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be >= 2".into()));
        }
        if self.input_dim < 1 || self.clusters_per_class < 1 {
            return Err(Error::Config("input_dim and clusters_per_class must be >= 1".into()));
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::Config(format!(
                "cluster_spread must be >= 0, got {}",
                self.cluster_spread
            )));
        }
        if !(0.0..0.5).contains(&self.label_noise_rate) {
            return Err(Error::Config(format!(
                "label_noise_rate must lie in [0, 0.5), got {}",
                self.label_noise_rate
            )));
        }
        if self.train_samples == 0 || self.dev_samples == 0 || self.test_samples == 0 {
            return Err(Error::Config("every split needs at least one sample".into()));
        }
        Ok(())
    }

    /// Cluster centroids, `n_classes * clusters_per_class` rows; class `c`
    /// owns rows `c * clusters_per_class ..`.
    pub fn centroids(&self, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Matrix::from_fn(self.n_classes * self.clusters_per_class, self.input_dim, |_, _| {
            rng.sample(StandardNormal)
        })
    }
}

/// Draws a dataset; deterministic in `(spec, seed)`. Rows are ordered train,
/// dev, test.
pub fn gen_synthetic(spec: &CapacityGapBenchmark, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let centroids = spec.centroids(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);

    let total = spec.train_samples + spec.dev_samples + spec.test_samples;
    let mut data = Vec::with_capacity(total * spec.input_dim);
    let mut labels = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);
    for (split, count) in [
        (Split::Train, spec.train_samples),
        (Split::Dev, spec.dev_samples),
        (Split::Test, spec.test_samples),
    ] {
        for _ in 0..count {
            let class = rng.random_range(0..spec.n_classes);
            let cluster = class * spec.clusters_per_class + rng.random_range(0..spec.clusters_per_class);
            for &c in centroids.row(cluster) {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(c + spec.cluster_spread * noise);
            }
            labels.push(class);
            splits.push(split);
        }
    }

    let flips = (spec.label_noise_rate * spec.train_samples as f64).round() as usize;
    for i in sample(&mut rng, spec.train_samples, flips) {
        let shift = rng.random_range(1..spec.n_classes);
        labels[i] = (labels[i] + shift) % spec.n_classes;
    }

    Dataset::new(
        Matrix::new(total, spec.input_dim, data)?,
        labels,
        spec.n_classes,
        splits,
    )
}
