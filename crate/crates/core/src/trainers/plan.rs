use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::engine::RunSettings;
use crate::distill::TemperatureSchedule;
use crate::nn::SgdConfig;
use crate::{Error, Result};

/// Student training procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoKd,
    VanillaKd,
    Takd,
    Rco,
    AnnealingKd,
    ProKd,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::NoKd,
        Method::VanillaKd,
        Method::Takd,
        Method::Rco,
        Method::AnnealingKd,
        Method::ProKd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoKd => "no_kd",
            Method::VanillaKd => "vanilla_kd",
            Method::Takd => "takd",
            Method::Rco => "rco",
            Method::AnnealingKd => "annealing_kd",
            Method::ProKd => "pro_kd",
        }
    }

    pub fn uses_schedule(self) -> bool {
        matches!(self, Method::ProKd | Method::AnnealingKd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Everything a two-phase student run needs besides models and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingPlan {
    pub method: Method,
    pub teacher_epochs: usize,
    /// Phase I temperatures and epoch allocation; only for `pro_kd` and `annealing_kd`.
    pub schedule: Option<TemperatureSchedule>,
    pub phase2_epochs: usize,
    /// Teacher epochs skipped before the first distillation step.
    pub warmup_epochs: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
    pub batch_size: usize,
    /// Pro-KD ablation: regress onto raw checkpoint logits at every step.
    #[serde(default)]
    pub disable_temperature: bool,
}

impl TrainingPlan {
    pub fn settings(&self) -> RunSettings {
        RunSettings {
            sgd: self.sgd,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        if self.teacher_epochs == 0 {
            return Err(Error::Plan("teacher_epochs must be >= 1".into()));
        }
        match (&self.schedule, self.method.uses_schedule()) {
            (Some(_), false) => {
                return Err(Error::Plan(format!(
                    "{} does not take a temperature schedule",
                    self.method
                )))
            }
            (None, true) => return Err(Error::Plan(format!("{} requires a temperature schedule", self.method))),
            _ => {}
        }
        if self.disable_temperature && self.method != Method::ProKd {
            return Err(Error::Plan("disable_temperature only applies to pro_kd".into()));
        }
        if let (Method::ProKd, Some(schedule)) = (self.method, &self.schedule) {
            let last = self.warmup_epochs + schedule.tau_max() as usize;
            if last > self.teacher_epochs {
                return Err(Error::Plan(format!(
                    "pro_kd needs teacher epochs {}..={last} but the teacher trains for {}",
                    self.warmup_epochs + 1,
                    self.teacher_epochs
                )));
            }
        }
        Ok(())
    }

    /// Student epochs across both phases.
    pub fn student_epochs(&self) -> usize {
        self.schedule.as_ref().map_or(0, TemperatureSchedule::total_epochs) + self.phase2_epochs
    }
}
