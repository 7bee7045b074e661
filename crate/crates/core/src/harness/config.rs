use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{load_csv, Dataset};
use super::synthetic::{gen_synthetic, CapacityGapBenchmark};
use crate::distill::{TemperatureSchedule, VanillaKdConfig};
use crate::nn::{Activation, MlpSpec, SgdConfig};
use crate::trainers::{Method, RunSettings, TrainingPlan};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(CapacityGapBenchmark),
    /// Resolved relative to the config file's directory.
    Csv(PathBuf),
}

/// Hidden layers and activation; input and output sizes come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl ArchSpec {
    pub fn new(hidden_dims: Vec<usize>) -> Self {
        Self {
            hidden_dims,
            activation: Activation::Relu,
        }
    }

    pub fn to_spec(&self, input_dim: usize, n_classes: usize) -> MlpSpec {
        MlpSpec::new(input_dim, self.hidden_dims.clone(), n_classes, self.activation)
    }
}

/// Settings of the `ntk-analyze` subcommand: a freshly initialized
/// one-hidden-layer network on random probes with random targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkConfig {
    pub width: usize,
    pub n_probes: usize,
    pub input_dim: usize,
    pub steps: usize,
    /// Step size as a fraction of `1 / lambda_max` of the initial Gram matrix.
    pub eta_scale: f64,
    #[serde(default = "default_ntk_activation")]
    pub activation: Activation,
    /// Analyze this unit of a `n_outputs`-way head instead of a scalar head.
    #[serde(default)]
    pub output_unit: Option<usize>,
    #[serde(default = "default_ntk_outputs")]
    pub n_outputs: usize,
    pub seed: u64,
    /// Directions checked against the fixed-kernel prediction.
    pub top_k: usize,
    pub tolerance: f64,
    pub max_inversions: usize,
}

fn default_ntk_activation() -> Activation {
    Activation::Tanh
}

fn default_ntk_outputs() -> usize {
    1
}

impl Default for NtkConfig {
    fn default() -> Self {
        Self {
            width: 512,
            n_probes: 20,
            input_dim: 5,
            steps: 50,
            eta_scale: 0.05,
            activation: Activation::Tanh,
            output_unit: None,
            n_outputs: 1,
            seed: 11,
            top_k: 3,
            tolerance: 0.1,
            max_inversions: 0,
        }
    }
}

impl NtkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.input_dim == 0 || self.n_outputs == 0 {
            return Err(Error::Config("ntk width, input_dim and n_outputs must be >= 1".into()));
        }
        if self.n_probes == 0 || self.n_probes > crate::ntk::MAX_PROBES {
            return Err(Error::Config(format!(
                "ntk n_probes must lie in 1..={}",
                crate::ntk::MAX_PROBES
            )));
        }
        if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) {
            return Err(Error::Config("ntk eta_scale must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("ntk tolerance must be positive".into()));
        }
        if let Some(u) = self.output_unit {
            if u >= self.n_outputs {
                return Err(Error::Config(format!(
                    "ntk output_unit {u} out of range for {} outputs",
                    self.n_outputs
                )));
            }
        }
        Ok(())
    }
}

/// One experiment: data, architectures, methods, seeds and the shared
/// hyper-parameters. Every student method gets `phase1_epochs +
/// phase2_epochs` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub teacher: ArchSpec,
    pub student: ArchSpec,
    #[serde(default)]
    pub assistant: Option<ArchSpec>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub n_teacher_epochs: usize,
    pub tau_max: u32,
    /// Phase I budget `N`, split over the temperature steps.
    pub phase1_epochs: usize,
    #[serde(default = "default_increment_factor")]
    pub increment_factor: u32,
    pub phase2_epochs: usize,
    #[serde(default)]
    pub warmup_epochs: usize,
    #[serde(default = "default_alpha")]
    pub vanilla_kd_alpha: f64,
    #[serde(default = "default_kd_temperature")]
    pub vanilla_kd_temperature: f64,
    /// RCO anchor epochs; every teacher epoch when absent.
    #[serde(default)]
    pub rco_anchors: Option<Vec<usize>>,
    /// Write model checkpoints next to the reports.
    #[serde(default)]
    pub save_checkpoints: bool,
    #[serde(default)]
    pub ntk: Option<NtkConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_increment_factor() -> u32 {
    1
}

fn default_alpha() -> f64 {
    0.5
}

fn default_kd_temperature() -> f64 {
    4.0
}

impl ExperimentConfig {
    /// The capacity-gap benchmark: teacher [256, 256], assistant [32],
    /// student [8], all six methods over seeds 1..=10.
    pub fn canonical() -> Self {
        let bench = CapacityGapBenchmark::canonical();
        Self {
            seeds: bench.seeds.clone(),
            dataset: DatasetSource::Synthetic(bench),
            teacher: ArchSpec::new(vec![256, 256]),
            student: ArchSpec::new(vec![8]),
            assistant: Some(ArchSpec::new(vec![32])),
            methods: all_methods(),
            learning_rate: 0.01,
            momentum: 0.9,
            grad_clip: Some(1.0),
            batch_size: 32,
            n_teacher_epochs: 10,
            tau_max: 4,
            phase1_epochs: 15,
            increment_factor: 2,
            phase2_epochs: 5,
            warmup_epochs: 5,
            vanilla_kd_alpha: 0.5,
            vanilla_kd_temperature: 4.0,
            rco_anchors: None,
            save_checkpoints: false,
            ntk: Some(NtkConfig::default()),
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative CSV path is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DatasetSource::Csv(p) = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            grad_clip: self.grad_clip,
            momentum: self.momentum,
        }
    }

    pub fn settings(&self, seed: u64) -> RunSettings {
        RunSettings {
            sgd: self.sgd(),
            batch_size: self.batch_size,
            seed,
        }
    }

    pub fn vanilla_kd(&self) -> VanillaKdConfig {
        VanillaKdConfig {
            alpha: self.vanilla_kd_alpha,
            temperature: self.vanilla_kd_temperature,
        }
    }

    pub fn schedule(&self) -> Result<TemperatureSchedule> {
        TemperatureSchedule::new(self.tau_max, self.phase1_epochs, self.increment_factor)
    }

    /// Epoch budget shared by every student method.
    pub fn student_epochs(&self) -> usize {
        self.phase1_epochs + self.phase2_epochs
    }

    pub fn rco_anchors(&self) -> Vec<usize> {
        self.rco_anchors
            .clone()
            .unwrap_or_else(|| (1..=self.n_teacher_epochs).collect())
    }

    /// The student budget spread evenly over the anchors, at least one epoch each.
    pub fn rco_epochs_per_anchor(&self) -> usize {
        (self.student_epochs() / self.rco_anchors().len().max(1)).max(1)
    }

    pub fn plan(&self, method: Method, seed: u64) -> Result<TrainingPlan> {
        let plan = TrainingPlan {
            method,
            teacher_epochs: self.n_teacher_epochs,
            schedule: if method.uses_schedule() {
                Some(self.schedule()?)
            } else {
                None
            },
            phase2_epochs: self.phase2_epochs,
            warmup_epochs: self.warmup_epochs,
            sgd: self.sgd(),
            seed,
            batch_size: self.batch_size,
            disable_temperature: false,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return Err(Error::Config("methods must not repeat".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("seeds must not repeat".into()));
        }
        if self.student_epochs() == 0 {
            return Err(Error::Config("phase1_epochs + phase2_epochs must be >= 1".into()));
        }
        if let DatasetSource::Synthetic(b) = &self.dataset {
            b.validate()?;
        }
        let (input, classes) = match &self.dataset {
            DatasetSource::Synthetic(b) => (b.input_dim, b.n_classes),
            DatasetSource::Csv(_) => (1, 2),
        };
        let teacher = self.teacher.to_spec(input, classes);
        let student = self.student.to_spec(input, classes);
        for (name, spec) in [("teacher", &teacher), ("student", &student)] {
            spec.validate_classifier()
                .map_err(|e| Error::Config(format!("{name} spec: {e}")))?;
        }
        if self.methods.contains(&Method::Takd) && self.assistant.is_none() {
            return Err(Error::Config("takd needs an assistant spec".into()));
        }
        if let Some(a) = &self.assistant {
            a.to_spec(input, classes)
                .validate_classifier()
                .map_err(|e| Error::Config(format!("assistant spec: {e}")))?;
        }
        for &m in &self.methods {
            self.plan(m, self.seeds[0]).map_err(cfg)?;
        }
        if self.methods.contains(&Method::ProKd) || self.methods.contains(&Method::AnnealingKd) {
            self.schedule().map_err(cfg)?;
        }
        self.vanilla_kd().validate()?;
        let anchors = self.rco_anchors();
        if anchors.is_empty() || anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "rco_anchors must be non-empty and strictly increasing".into(),
            ));
        }
        if anchors.iter().any(|&a| a == 0 || a > self.n_teacher_epochs) {
            return Err(Error::Config(format!(
                "rco_anchors must lie in 1..={}",
                self.n_teacher_epochs
            )));
        }
        if let Some(ntk) = &self.ntk {
            ntk.validate()?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic(b) => gen_synthetic(b, b.data_seed),
            DatasetSource::Csv(p) => load_csv(p),
        }
    }
}
