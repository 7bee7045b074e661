use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Training stage an epoch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Cross entropy on labels only (teacher, no-KD student).
    Supervised,
    /// Vanilla KD objective (vanilla, TAKD, RCO).
    Distill,
    /// Logit regression onto a teacher target.
    Phase1,
    /// Cross entropy after logit regression.
    Phase2,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Supervised => "supervised",
            Phase::Distill => "distill",
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counted across all phases of the run.
    pub epoch: usize,
    pub phase: Phase,
    pub temperature: Option<u32>,
    /// Mean of the per-batch losses.
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    pub per_epoch: Vec<EpochRecord>,
    pub final_dev_accuracy: f64,
    pub final_test_accuracy: f64,
    pub checkpoint_paths: Vec<PathBuf>,
}

impl RunReport {
    pub(crate) fn new(method: &str, seed: u64) -> Self {
        Self {
            method: method.to_owned(),
            seed,
            per_epoch: Vec::new(),
            final_dev_accuracy: 0.0,
            final_test_accuracy: 0.0,
            checkpoint_paths: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.to_json() + "\n"))
    }

    /// One row per epoch: `method,seed,epoch,phase,temperature,train_loss,dev_accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,seed,epoch,phase,temperature,train_loss,dev_accuracy\n");
        for r in &self.per_epoch {
            let temperature = r.temperature.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.method,
                self.seed,
                r.epoch,
                r.phase.as_str(),
                temperature,
                r.train_loss,
                r.dev_accuracy
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
