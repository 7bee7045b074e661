use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{EpochRecord, Phase, RunReport};
use crate::distill::{prokd_phase1_loss, vanilla_kd_loss, VanillaKdConfig};
use crate::harness::{Dataset, Samples, Split};
use crate::nn::{init_model, save_checkpoint, Checkpoint, MlpModel, MlpSpec, Sgd, SgdConfig};
use crate::numerics::{cross_entropy, mse_logits, softmax_rows, LossGrad, Matrix};
use crate::{Error, Result};

/// Optimizer, batching and seed shared by every stage of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Reported after every optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEvent {
    pub epoch: usize,
    /// 1-based within the epoch.
    pub batch: usize,
    pub loss: f64,
}

/// Where a run writes checkpoints, plus an optional per-batch observer.
#[derive(Default)]
pub struct RunSink<'a> {
    pub out_dir: Option<PathBuf>,
    pub observer: Option<&'a mut dyn FnMut(&BatchEvent)>,
}

impl<'a> RunSink<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn to_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: Some(dir.into()),
            observer: None,
        }
    }

    pub fn with_observer(mut self, observer: &'a mut dyn FnMut(&BatchEvent)) -> Self {
        self.observer = Some(observer);
        self
    }

    pub(crate) fn child(&mut self, name: &str) -> RunSink<'_> {
        let observer: Option<&mut dyn FnMut(&BatchEvent)> = match &mut self.observer {
            Some(f) => Some(&mut **f),
            None => None,
        };
        RunSink {
            out_dir: self.out_dir.as_ref().map(|d| d.join(name)),
            observer,
        }
    }
}

/// Sample order for a given epoch. Depends only on `(seed, epoch, n)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Fraction of rows whose argmax logit equals the label.
pub fn accuracy(model: &MlpModel, samples: &Samples) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Plan("cannot measure accuracy on an empty split".into()));
    }
    let logits = model.predict(&samples.features)?;
    let hits = (0..samples.len())
        .filter(|&i| logits.argmax_row(i) == samples.labels[i])
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Train/dev/test views of a dataset.
pub(crate) struct Splits {
    pub train: Samples,
    pub train_targets: Matrix,
    pub dev: Samples,
    pub test: Samples,
}

impl Splits {
    pub fn new(data: &Dataset) -> Result<Self> {
        let train = data.subset(Split::Train);
        let dev = data.subset(Split::Dev);
        let test = data.subset(Split::Test);
        for (name, s) in [("train", &train), ("dev", &dev), ("test", &test)] {
            if s.is_empty() {
                return Err(Error::Plan(format!("dataset has no {name} samples")));
            }
        }
        let train_targets = train.one_hot();
        Ok(Self {
            train,
            train_targets,
            dev,
            test,
        })
    }

    /// Logits of `model` on the training features.
    pub fn train_logits(&self, model: &MlpModel) -> Result<Matrix> {
        model.predict(&self.train.features)
    }
}

pub(crate) fn check_input(spec: &MlpSpec, data: &Dataset) -> Result<()> {
    spec.validate_classifier()?;
    if spec.input_dim != data.input_dim() || spec.output_dim != data.n_classes() {
        return Err(Error::Plan(format!(
            "model maps {} -> {} but the dataset has {} features and {} classes",
            spec.input_dim,
            spec.output_dim,
            data.input_dim(),
            data.n_classes()
        )));
    }
    Ok(())
}

/// Per-batch objective. Teacher-derived matrices are indexed like the training split.
#[derive(Clone, Copy)]
pub(crate) enum Objective<'a> {
    CrossEntropy,
    Vanilla {
        teacher_logits: &'a Matrix,
        cfg: VanillaKdConfig,
    },
    ProKd {
        teacher_logits: &'a Matrix,
        temperature: u32,
    },
    Regression {
        target: &'a Matrix,
    },
}

impl Objective<'_> {
    fn evaluate(&self, logits: &Matrix, labels: &Matrix, rows: &[usize]) -> Result<LossGrad> {
        match *self {
            Objective::CrossEntropy => cross_entropy(labels, &softmax_rows(logits, 1.0)?),
            Objective::Vanilla { teacher_logits, cfg } => {
                vanilla_kd_loss(labels, logits, &teacher_logits.select_rows(rows), &cfg)
            }
            Objective::ProKd {
                teacher_logits,
                temperature,
            } => prokd_phase1_loss(logits, &teacher_logits.select_rows(rows), temperature),
            Objective::Regression { target } => mse_logits(logits, &target.select_rows(rows)),
        }
    }
}

/// A model under training together with its optimizer state and report.
pub(crate) struct Trainer<'d> {
    pub model: MlpModel,
    sgd: Sgd,
    settings: RunSettings,
    splits: &'d Splits,
    pub report: RunReport,
    epoch: usize,
    keep: bool,
    pub checkpoints: Vec<Checkpoint>,
}

impl<'d> Trainer<'d> {
    pub fn new(method: &str, spec: &MlpSpec, settings: RunSettings, splits: &'d Splits) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            model: init_model(spec, settings.seed)?,
            sgd: Sgd::new(settings.sgd)?,
            settings,
            splits,
            report: RunReport::new(method, settings.seed),
            epoch: 0,
            keep: false,
            checkpoints: Vec::new(),
        })
    }

    /// Keep every end-of-epoch checkpoint in memory.
    pub fn keep_checkpoints(mut self) -> Self {
        self.keep = true;
        self
    }

    pub fn run(
        &mut self,
        objective: Objective<'_>,
        epochs: usize,
        phase: Phase,
        temperature: Option<u32>,
        sink: &mut RunSink<'_>,
    ) -> Result<()> {
        let train = &self.splits.train;
        let n = train.len();
        for _ in 0..epochs {
            self.epoch += 1;
            let order = epoch_order(self.settings.seed, self.epoch, n);
            let mut total = 0.0;
            let mut batches = 0;
            for (b, rows) in order.chunks(self.settings.batch_size).enumerate() {
                let x = train.features.select_rows(rows);
                let y = self.splits.train_targets.select_rows(rows);
                let (logits, cache) = self.model.forward(&x)?;
                let LossGrad { loss, grad } = objective.evaluate(&logits, &y, rows)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                let grads = self.model.backward(&cache, &grad)?;
                self.sgd.step(&mut self.model, &grads)?;
                if let Some(observer) = sink.observer.as_mut() {
                    observer(&BatchEvent {
                        epoch: self.epoch,
                        batch: b + 1,
                        loss,
                    });
                }
                total += loss;
                batches += 1;
            }
            let dev_accuracy = accuracy(&self.model, &self.splits.dev)?;
            self.report.per_epoch.push(EpochRecord {
                epoch: self.epoch,
                phase,
                temperature,
                train_loss: total / batches as f64,
                dev_accuracy,
            });
            self.checkpoint(dev_accuracy, sink)?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, dev_accuracy: f64, sink: &RunSink<'_>) -> Result<()> {
        if sink.out_dir.is_none() && !self.keep {
            return Ok(());
        }
        let ckpt = Checkpoint {
            epoch: self.epoch,
            model: self.model.clone(),
            dev_metric: Some(dev_accuracy),
            seed: self.settings.seed,
        };
        if let Some(dir) = &sink.out_dir {
            let path = dir.join(format!("epoch_{:03}.json", self.epoch));
            save_checkpoint(&ckpt, &path)?;
            self.report.checkpoint_paths.push(path);
        }
        if self.keep {
            self.checkpoints.push(ckpt);
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(MlpModel, RunReport, Vec<Checkpoint>)> {
        self.report.final_dev_accuracy = match self.report.per_epoch.last() {
            Some(r) => r.dev_accuracy,
            None => accuracy(&self.model, &self.splits.dev)?,
        };
        self.report.final_test_accuracy = accuracy(&self.model, &self.splits.test)?;
        Ok((self.model, self.report, self.checkpoints))
    }
}
