use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use crate::nn::MlpSpec;
use crate::trainers::{
    checkpoint_search, train_student_annealing, train_student_no_kd, train_student_prokd, train_student_rco,
    train_student_takd, train_student_vanilla, train_teacher, Method, RunReport, RunSink, SearchReport, TeacherRun,
};
use crate::{Error, Result};

/// Outcome of one (method, seed) cell; failures carry the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub method: String,
    pub seed: u64,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

impl CellOutcome {
    fn new(method: &str, seed: u64, result: Result<RunReport>) -> Self {
        match result {
            Ok(report) => Self {
                method: method.to_owned(),
                seed,
                report: Some(report),
                error: None,
            },
            Err(e) => Self {
                method: method.to_owned(),
                seed,
                report: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub completed: usize,
    pub failed: usize,
    pub mean_test_accuracy: Option<f64>,
    /// Sample standard deviation; 0 for a single run.
    pub std_test_accuracy: Option<f64>,
    pub mean_dev_accuracy: Option<f64>,
    pub std_dev_accuracy: Option<f64>,
}

/// Mean over seeds of `pro_kd − baseline` final test accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub baseline: String,
    pub pairs: usize,
    pub mean_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub method: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Teacher first, then methods in config order.
    pub methods: Vec<MethodSummary>,
    pub paired_differences: Vec<PairedDifference>,
    pub failed: Vec<FailedCell>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Per seed, in config order.
    pub teachers: Vec<CellOutcome>,
    /// Seed-major, methods in config order.
    pub cells: Vec<CellOutcome>,
    pub summary: Summary,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn summarize_method(method: &str, cells: &[&CellOutcome]) -> MethodSummary {
    let reports: Vec<&RunReport> = cells.iter().filter_map(|c| c.report.as_ref()).collect();
    let test: Vec<f64> = reports.iter().map(|r| r.final_test_accuracy).collect();
    let dev: Vec<f64> = reports.iter().map(|r| r.final_dev_accuracy).collect();
    let (mean_test_accuracy, std_test_accuracy) = mean_std(&test);
    let (mean_dev_accuracy, std_dev_accuracy) = mean_std(&dev);
    MethodSummary {
        method: method.to_owned(),
        completed: reports.len(),
        failed: cells.len() - reports.len(),
        mean_test_accuracy,
        std_test_accuracy,
        mean_dev_accuracy,
        std_dev_accuracy,
    }
}

/// Aggregates finished cells. Recomputable from the per-run reports alone.
pub fn summarize(methods: &[Method], teachers: &[CellOutcome], cells: &[CellOutcome]) -> Summary {
    let mut rows = vec![summarize_method("teacher", &teachers.iter().collect::<Vec<_>>())];
    for m in methods {
        let mine: Vec<&CellOutcome> = cells.iter().filter(|c| c.method == m.as_str()).collect();
        rows.push(summarize_method(m.as_str(), &mine));
    }

    let final_test = |method: Method, seed: u64| {
        cells
            .iter()
            .find(|c| c.method == method.as_str() && c.seed == seed)
            .and_then(|c| c.report.as_ref())
            .map(|r| r.final_test_accuracy)
    };
    let mut paired_differences = Vec::new();
    if methods.contains(&Method::ProKd) {
        let seeds: Vec<u64> = cells
            .iter()
            .filter(|c| c.method == Method::ProKd.as_str())
            .map(|c| c.seed)
            .collect();
        for &baseline in methods.iter().filter(|&&m| m != Method::ProKd) {
            let diffs: Vec<f64> = seeds
                .iter()
                .filter_map(|&s| Some(final_test(Method::ProKd, s)? - final_test(baseline, s)?))
                .collect();
            paired_differences.push(PairedDifference {
                baseline: baseline.as_str().to_owned(),
                pairs: diffs.len(),
                mean_difference: mean_std(&diffs).0,
            });
        }
    }

    let failed = teachers
        .iter()
        .chain(cells)
        .filter_map(|c| {
            c.error.as_ref().map(|e| FailedCell {
                method: c.method.clone(),
                seed: c.seed,
                error: e.clone(),
            })
        })
        .collect();
    Summary {
        methods: rows,
        paired_differences,
        failed,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Summary {
    /// `method,completed,failed,mean_test_accuracy,std_test_accuracy,mean_dev_accuracy,std_dev_accuracy`
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,completed,failed,mean_test_accuracy,std_test_accuracy,mean_dev_accuracy,std_dev_accuracy\n",
        );
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m.method,
                m.completed,
                m.failed,
                fmt_opt(m.mean_test_accuracy),
                fmt_opt(m.std_test_accuracy),
                fmt_opt(m.mean_dev_accuracy),
                fmt_opt(m.std_dev_accuracy)
            ));
        }
        out
    }

    /// `baseline,pairs,mean_difference`
    pub fn paired_csv(&self) -> String {
        let mut out = String::from("baseline,pairs,mean_difference\n");
        for p in &self.paired_differences {
            out.push_str(&format!("{},{},{}\n", p.baseline, p.pairs, fmt_opt(p.mean_difference)));
        }
        out
    }

    pub fn mean_test(&self, method: &str) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method)?.mean_test_accuracy
    }

    pub fn paired(&self, baseline: Method) -> Option<f64> {
        self.paired_differences
            .iter()
            .find(|p| p.baseline == baseline.as_str())?
            .mean_difference
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports always serialize") + "\n";
    write_text(path, &text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rewrites checkpoint paths relative to the output root so reports do not
/// depend on where the output directory lives.
fn relativize(report: &mut RunReport, root: Option<&Path>) {
    if let Some(root) = root {
        for p in &mut report.checkpoint_paths {
            if let Ok(rel) = p.strip_prefix(root) {
                *p = rel.to_path_buf();
            }
        }
    }
}

struct SeedContext<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    out: Option<&'a Path>,
    seed: u64,
}

impl SeedContext<'_> {
    fn dir(&self, name: &str) -> Option<PathBuf> {
        self.out.map(|o| o.join(format!("seed_{}", self.seed)).join(name))
    }

    fn spec(&self, arch: &super::config::ArchSpec) -> MlpSpec {
        arch.to_spec(self.data.input_dim(), self.data.n_classes())
    }

    fn sink(&self, name: &str) -> RunSink<'static> {
        match self.dir(name) {
            Some(d) if self.cfg.save_checkpoints => RunSink::to_dir(d),
            _ => RunSink::none(),
        }
    }

    fn teacher(&self, always_save: bool) -> Result<TeacherRun> {
        let mut sink = match self.dir("teacher") {
            Some(d) if always_save || self.cfg.save_checkpoints => RunSink::to_dir(d),
            _ => RunSink::none(),
        };
        train_teacher(
            &self.spec(&self.cfg.teacher),
            self.data,
            self.cfg.n_teacher_epochs,
            &self.cfg.settings(self.seed),
            &mut sink,
        )
    }

    fn student(
        &self,
        method: Method,
        teacher: &TeacherRun,
        disable_temperature: bool,
        label: &str,
    ) -> Result<RunReport> {
        let cfg = self.cfg;
        let spec = self.spec(&cfg.student);
        let settings = cfg.settings(self.seed);
        let epochs = cfg.student_epochs();
        let kd = cfg.vanilla_kd();
        let mut sink = self.sink(label);
        let report = match method {
            Method::NoKd => train_student_no_kd(&spec, epochs, &settings, self.data, &mut sink)?.report,
            Method::VanillaKd => {
                train_student_vanilla(
                    &spec,
                    teacher.final_checkpoint(),
                    &kd,
                    epochs,
                    &settings,
                    self.data,
                    &mut sink,
                )?
                .report
            }
            Method::Takd => {
                let assistant = cfg
                    .assistant
                    .as_ref()
                    .ok_or_else(|| Error::Config("takd needs an assistant spec".into()))?;
                let out = train_student_takd(
                    &spec,
                    &self.spec(assistant),
                    teacher.final_checkpoint(),
                    &kd,
                    epochs,
                    &settings,
                    self.data,
                    &mut sink,
                )?;
                if let Some(d) = self.dir(label) {
                    let mut a = out.assistant.report;
                    relativize(&mut a, self.out);
                    write_json(&d.join("assistant_report.json"), &a)?;
                }
                out.student.report
            }
            Method::Rco => {
                train_student_rco(
                    &spec,
                    &teacher.checkpoints,
                    &cfg.rco_anchors(),
                    &kd,
                    cfg.rco_epochs_per_anchor(),
                    &settings,
                    self.data,
                    &mut sink,
                )?
                .report
            }
            Method::AnnealingKd => {
                let plan = cfg.plan(method, self.seed)?;
                train_student_annealing(&spec, teacher.final_checkpoint(), &plan, self.data, &mut sink)?.report
            }
            Method::ProKd => {
                let mut plan = cfg.plan(method, self.seed)?;
                plan.disable_temperature = disable_temperature;
                train_student_prokd(&spec, &teacher.checkpoints, &plan, self.data, &mut sink)?.report
            }
        };
        let mut report = report;
        relativize(&mut report, self.out);
        if let Some(d) = self.dir(label) {
            report.write_json(&d.join("report.json"))?;
            report.write_csv(&d.join("report.csv"))?;
        }
        Ok(report)
    }

    fn teacher_outcome(&self, run: &Result<TeacherRun>) -> Result<CellOutcome> {
        let outcome = match run {
            Ok(t) => {
                let mut report = t.report.clone();
                relativize(&mut report, self.out);
                if let Some(d) = self.dir("teacher") {
                    report.write_json(&d.join("report.json"))?;
                    report.write_csv(&d.join("report.csv"))?;
                }
                CellOutcome::new("teacher", self.seed, Ok(report))
            }
            Err(e) => CellOutcome {
                method: "teacher".into(),
                seed: self.seed,
                report: None,
                error: Some(e.to_string()),
            },
        };
        Ok(outcome)
    }
}

/// Applies `f` to every seed, on up to `jobs` threads, keeping seed order.
fn per_seed<T: Send>(seeds: &[u64], jobs: usize, f: impl Fn(u64) -> T + Sync) -> Result<Vec<T>> {
    if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
        Ok(pool.install(|| seeds.par_iter().map(|&s| f(s)).collect()))
    } else {
        Ok(seeds.iter().map(|&s| f(s)).collect())
    }
}

/// Runs every (method, seed) cell. Each seed trains one teacher that all of
/// its methods share. A failing cell is recorded and the rest carry on.
/// With `out`, writes `seed_<s>/<method>/report.{json,csv}`, `summary.json`,
/// `summary.csv` and `paired_differences.csv`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &Dataset,
    out: Option<&Path>,
    jobs: usize,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_seed_results = per_seed(&cfg.seeds, jobs, |seed| -> Result<(CellOutcome, Vec<CellOutcome>)> {
        let ctx = SeedContext { cfg, data, out, seed };
        let teacher = ctx.teacher(false);
        let teacher_cell = ctx.teacher_outcome(&teacher)?;
        let cells = cfg
            .methods
            .iter()
            .map(|&m| {
                let result = match (&teacher, m) {
                    (Ok(t), _) => ctx.student(m, t, false, m.as_str()),
                    (Err(_), Method::NoKd) => ctx.student_without_teacher(),
                    (Err(e), _) => Err(Error::Plan(format!("teacher failed: {e}"))),
                };
                CellOutcome::new(m.as_str(), seed, result)
            })
            .collect();
        Ok((teacher_cell, cells))
    })?;

    let mut teachers = Vec::new();
    let mut cells = Vec::new();
    for r in per_seed_results {
        let (t, c) = r?;
        teachers.push(t);
        cells.extend(c);
    }
    let summary = summarize(&cfg.methods, &teachers, &cells);
    if let Some(out) = out {
        write_json(&out.join("summary.json"), &summary)?;
        write_text(&out.join("summary.csv"), &summary.to_csv())?;
        write_text(&out.join("paired_differences.csv"), &summary.paired_csv())?;
    }
    Ok(ExperimentResult {
        teachers,
        cells,
        summary,
    })
}

impl SeedContext<'_> {
    /// `no_kd` does not need the teacher.
    fn student_without_teacher(&self) -> Result<RunReport> {
        let spec = self.spec(&self.cfg.student);
        let mut sink = self.sink(Method::NoKd.as_str());
        let mut report = train_student_no_kd(
            &spec,
            self.cfg.student_epochs(),
            &self.cfg.settings(self.seed),
            self.data,
            &mut sink,
        )?
        .report;
        relativize(&mut report, self.out);
        if let Some(d) = self.dir(Method::NoKd.as_str()) {
            report.write_json(&d.join("report.json"))?;
            report.write_csv(&d.join("report.csv"))?;
        }
        Ok(report)
    }
}

/// Trains and saves the teacher of every seed.
pub fn run_teachers(cfg: &ExperimentConfig, data: &Dataset, out: Option<&Path>, jobs: usize) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    per_seed(&cfg.seeds, jobs, |seed| {
        let ctx = SeedContext { cfg, data, out, seed };
        let run = ctx.teacher(true);
        let cell = ctx.teacher_outcome(&run)?;
        run?;
        Ok(cell.report.expect("teacher succeeded"))
    })?
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    pub with_temperature: f64,
    pub without_temperature: f64,
    /// `with − without`, final test accuracy.
    pub difference: f64,
}

/// Pro-KD with and without the temperature schedule on the same teachers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub mean_with_temperature: Option<f64>,
    pub mean_without_temperature: Option<f64>,
    pub mean_difference: Option<f64>,
    pub failed: Vec<FailedCell>,
}

impl AblationReport {
    /// `seed,with_temperature,without_temperature,difference`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,with_temperature,without_temperature,difference\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.seed, r.with_temperature, r.without_temperature, r.difference
            ));
        }
        out
    }
}

pub const NO_TEMPERATURE_LABEL: &str = "pro_kd_no_temperature";

/// Writes `seed_<s>/{pro_kd,pro_kd_no_temperature}/report.*`, `ablation.json`
/// and `ablation.csv`.
pub fn run_ablation(cfg: &ExperimentConfig, data: &Dataset, out: Option<&Path>, jobs: usize) -> Result<AblationReport> {
    cfg.validate()?;
    cfg.plan(Method::ProKd, cfg.seeds[0])?;
    let results = per_seed(
        &cfg.seeds,
        jobs,
        |seed| -> std::result::Result<AblationRow, FailedCell> {
            let ctx = SeedContext { cfg, data, out, seed };
            let fail = |method: &str, e: Error| FailedCell {
                method: method.to_owned(),
                seed,
                error: e.to_string(),
            };
            let teacher = ctx.teacher(false).map_err(|e| fail("teacher", e))?;
            let with = ctx
                .student(Method::ProKd, &teacher, false, Method::ProKd.as_str())
                .map_err(|e| fail(Method::ProKd.as_str(), e))?;
            let without = ctx
                .student(Method::ProKd, &teacher, true, NO_TEMPERATURE_LABEL)
                .map_err(|e| fail(NO_TEMPERATURE_LABEL, e))?;
            Ok(AblationRow {
                seed,
                with_temperature: with.final_test_accuracy,
                without_temperature: without.final_test_accuracy,
                difference: with.final_test_accuracy - without.final_test_accuracy,
            })
        },
    )?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failed.push(f),
        }
    }
    let col = |f: fn(&AblationRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>()).0;
    let report = AblationReport {
        mean_with_temperature: col(|r| r.with_temperature),
        mean_without_temperature: col(|r| r.without_temperature),
        mean_difference: col(|r| r.difference),
        rows,
        failed,
    };
    if let Some(out) = out {
        write_json(&out.join("ablation.json"), &report)?;
        write_text(&out.join("ablation.csv"), &report.to_csv())?;
    }
    Ok(report)
}

/// Checkpoint search for every seed. Writes
/// `seed_<s>/checkpoint_search{.json,.csv,_grid.csv}` and `search_summary.csv`.
pub fn run_checkpoint_search(
    cfg: &ExperimentConfig,
    data: &Dataset,
    out: Option<&Path>,
    jobs: usize,
) -> Result<Vec<SearchReport>> {
    cfg.validate()?;
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let ctx = SeedContext { cfg, data, out, seed };
        let teacher = ctx.teacher(false)?;
        let cell_dir = if cfg.save_checkpoints { ctx.dir("search") } else { None };
        let run = checkpoint_search(
            &ctx.spec(&cfg.student),
            &teacher.checkpoints,
            &cfg.vanilla_kd(),
            cfg.student_epochs(),
            &cfg.settings(seed),
            data,
            cell_dir.as_deref(),
            jobs,
        )?;
        if let Some(out) = out {
            let dir = out.join(format!("seed_{seed}"));
            run.report.write_json(&dir.join("checkpoint_search.json"))?;
            run.report.write_csv(&dir.join("checkpoint_search.csv"))?;
            run.report.write_grid_csv(&dir.join("checkpoint_search_grid.csv"))?;
        }
        reports.push(run.report);
    }
    if let Some(out) = out {
        let mut text = String::from(
            "seed,best_teacher_epoch,best_student_epoch,best_student_epoch_differs,selected_student_test\n",
        );
        for r in &reports {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                r.seed,
                r.best_teacher_epoch,
                r.best_student_epoch,
                r.best_student_epoch_differs,
                r.selected_student_test
            ));
        }
        write_text(&out.join("search_summary.csv"), &text)?;
    }
    Ok(reports)
}
