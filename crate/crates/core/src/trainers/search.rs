use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{accuracy, check_input, RunSettings, RunSink, Splits};
use super::methods::train_student_vanilla;
use super::report::{write_text, RunReport};
use crate::distill::VanillaKdConfig;
use crate::harness::Dataset;
use crate::nn::{Checkpoint, MlpSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub teacher_epoch: usize,
    pub teacher_dev: f64,
    pub student_dev: f64,
    pub student_test: f64,
}

/// Vanilla KD from every teacher checkpoint, one fresh student per checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub seed: u64,
    /// Ordered by teacher epoch.
    pub rows: Vec<SearchRow>,
    /// Checkpoint with the highest teacher dev accuracy (earliest on ties).
    pub best_teacher_epoch: usize,
    /// Checkpoint whose student reached the highest dev accuracy (earliest on ties).
    pub best_student_epoch: usize,
    pub best_student_epoch_differs: bool,
    /// Student test accuracy at `best_student_epoch`.
    pub selected_student_test: f64,
}

type Metric = fn(&SearchRow) -> f64;

#[derive(Debug, Clone)]
pub struct SearchRun {
    pub report: SearchReport,
    /// Student run per row, same order.
    pub cells: Vec<RunReport>,
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

impl SearchReport {
    fn from_rows(seed: u64, rows: Vec<SearchRow>) -> Self {
        let t = argmax_first(rows.iter().map(|r| r.teacher_dev));
        let s = argmax_first(rows.iter().map(|r| r.student_dev));
        Self {
            seed,
            best_teacher_epoch: rows[t].teacher_epoch,
            best_student_epoch: rows[s].teacher_epoch,
            best_student_epoch_differs: rows[t].teacher_epoch != rows[s].teacher_epoch,
            selected_student_test: rows[s].student_test,
            rows,
        }
    }

    /// `teacher_epoch,teacher_dev,student_dev,student_test`, one row per checkpoint.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("teacher_epoch,teacher_dev,student_dev,student_test\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.teacher_epoch, r.teacher_dev, r.student_dev, r.student_test
            ));
        }
        out
    }

    /// Transposed view: one column per teacher epoch, rows `teacher_dev`,
    /// `student_dev`, `student_test`.
    pub fn to_grid_csv(&self) -> String {
        let mut out = String::from("metric");
        for r in &self.rows {
            out.push_str(&format!(",epoch_{}", r.teacher_epoch));
        }
        out.push('\n');
        let lines: [(&str, Metric); 3] = [
            ("teacher_dev", |r| r.teacher_dev),
            ("student_dev", |r| r.student_dev),
            ("student_test", |r| r.student_test),
        ];
        for (name, get) in lines {
            out.push_str(name);
            for r in &self.rows {
                out.push_str(&format!(",{}", get(r)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn write_grid_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_grid_csv())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_text(
            path,
            &(serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"),
        )
    }
}

/// Runs one vanilla KD student per teacher checkpoint. Cells are independent
/// and may run on `jobs` threads; checkpoints of cell `k` go to
/// `out_dir/cell_epoch_{k:03}`.
#[allow(clippy::too_many_arguments)]
pub fn checkpoint_search(
    spec: &MlpSpec,
    teacher_checkpoints: &[Checkpoint],
    cfg: &VanillaKdConfig,
    epochs: usize,
    settings: &RunSettings,
    data: &Dataset,
    out_dir: Option<&Path>,
    jobs: usize,
) -> Result<SearchRun> {
    if teacher_checkpoints.len() < 2 {
        return Err(Error::Plan(
            "checkpoint search needs at least two teacher checkpoints".into(),
        ));
    }
    check_input(spec, data)?;
    let mut ordered: Vec<&Checkpoint> = teacher_checkpoints.iter().collect();
    ordered.sort_by_key(|c| c.epoch);
    if let Some(w) = ordered.windows(2).find(|w| w[0].epoch == w[1].epoch) {
        return Err(Error::Plan(format!(
            "duplicate teacher checkpoint for epoch {}",
            w[0].epoch
        )));
    }
    let splits = Splits::new(data)?;

    let cell = |ckpt: &&Checkpoint| -> Result<(SearchRow, RunReport)> {
        let teacher_dev = match ckpt.dev_metric {
            Some(v) => v,
            None => accuracy(&ckpt.model, &splits.dev)?,
        };
        let mut sink = match out_dir {
            Some(dir) => RunSink::to_dir(dir.join(format!("cell_epoch_{:03}", ckpt.epoch))),
            None => RunSink::none(),
        };
        let run = train_student_vanilla(spec, ckpt, cfg, epochs, settings, data, &mut sink)?;
        let row = SearchRow {
            teacher_epoch: ckpt.epoch,
            teacher_dev,
            student_dev: run.report.final_dev_accuracy,
            student_test: run.report.final_test_accuracy,
        };
        Ok((row, run.report))
    };

    let results: Vec<Result<(SearchRow, RunReport)>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| ordered.par_iter().map(cell).collect())
    } else {
        ordered.iter().map(cell).collect()
    };
    let (rows, cells): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(SearchRun {
        report: SearchReport::from_rows(settings.seed, rows),
        cells,
    })
}
