use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::analysis::run_ntk_analysis;
use super::config::{ExperimentConfig, NtkConfig};
use super::experiment::{run_ablation, run_checkpoint_search, run_experiment, run_teachers, write_json, write_text};
use crate::trainers::Method;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "distill-lab",
    version,
    about = "Knowledge distillation experiments on synthetic and CSV data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's output_dir, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured dataset as CSV.
    GenData(Common),
    /// Train one teacher per seed and save its checkpoints.
    TrainTeacher(Common),
    /// Train a teacher and one student method per seed.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "pro_kd")]
        method: String,
    },
    /// Vanilla KD from every teacher checkpoint.
    CheckpointSearch(Common),
    /// Empirical NTK decay analysis (uses the config's `ntk` section or defaults).
    NtkAnalyze(Common),
    /// Every configured method over every seed, with a summary table.
    Compare(Common),
    /// Pro-KD with and without the temperature schedule.
    AblateTemperature(Common),
}

/// Host and timing information, kept out of the result files.
#[derive(Serialize)]
struct Metadata {
    command: String,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    elapsed_seconds: f64,
    host: Option<String>,
    version: &'static str,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn config_stage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn runtime_stage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Config(_) => Failure::Config(e),
        other => Failure::Runtime(other),
    })
}

fn load_config(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(Error::Config("--config is required for this command".into())))?;
    let mut cfg = config_stage(ExperimentConfig::load(path))?;
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    config_stage(cfg.validate())?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn check_jobs(common: &Common) -> std::result::Result<(), Failure> {
    if common.jobs == 0 {
        return Err(Failure::Config(Error::Config("--jobs must be >= 1".into())));
    }
    Ok(())
}

fn prepare(common: &Common) -> std::result::Result<(ExperimentConfig, crate::harness::Dataset, PathBuf), Failure> {
    check_jobs(common)?;
    let cfg = load_config(common)?;
    let data = config_stage(cfg.load_dataset())?;
    let out = out_dir(common, Some(&cfg));
    runtime_stage(write_text(&out.join("config.json"), &(cfg.to_json() + "\n")))?;
    Ok((cfg, data, out))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn run(command: &Command, stdout: &mut dyn Write) -> std::result::Result<(PathBuf, bool), Failure> {
    let mut say = |line: String| {
        let _ = writeln!(stdout, "{line}");
    };
    match command {
        Command::GenData(common) => {
            let (_, data, out) = prepare(common)?;
            let path = out.join("dataset.csv");
            runtime_stage(data.write_csv(&path))?;
            say(format!("wrote {} samples to {}", data.len(), path.display()));
            Ok((out, true))
        }
        Command::TrainTeacher(common) => {
            let (cfg, data, out) = prepare(common)?;
            let reports = runtime_stage(run_teachers(&cfg, &data, Some(&out), common.jobs))?;
            for r in reports {
                say(format!(
                    "seed {}: teacher test accuracy {:.4}",
                    r.seed, r.final_test_accuracy
                ));
            }
            Ok((out, true))
        }
        Command::Distill { common, method } => {
            check_jobs(common)?;
            let method: Method = config_stage(method.parse())?;
            let mut cfg = load_config(common)?;
            cfg.methods = vec![method];
            config_stage(cfg.validate())?;
            let data = config_stage(cfg.load_dataset())?;
            let out = out_dir(common, Some(&cfg));
            runtime_stage(write_text(&out.join("config.json"), &(cfg.to_json() + "\n")))?;
            let result = runtime_stage(run_experiment(&cfg, &data, Some(&out), common.jobs))?;
            for c in &result.cells {
                match (&c.report, &c.error) {
                    (Some(r), _) => say(format!(
                        "seed {}: {} test accuracy {:.4}",
                        c.seed, c.method, r.final_test_accuracy
                    )),
                    (_, Some(e)) => say(format!("seed {}: {} failed: {e}", c.seed, c.method)),
                    _ => {}
                }
            }
            Ok((out, result.summary.failed.is_empty()))
        }
        Command::CheckpointSearch(common) => {
            let (cfg, data, out) = prepare(common)?;
            let reports = runtime_stage(run_checkpoint_search(&cfg, &data, Some(&out), common.jobs))?;
            for r in reports {
                say(format!(
                    "seed {}: best teacher epoch {}, best student epoch {}{}",
                    r.seed,
                    r.best_teacher_epoch,
                    r.best_student_epoch,
                    if r.best_student_epoch_differs { " (differs)" } else { "" }
                ));
            }
            Ok((out, true))
        }
        Command::NtkAnalyze(common) => {
            check_jobs(common)?;
            let (ntk, out) = match &common.config {
                Some(_) => {
                    let cfg = load_config(common)?;
                    (cfg.ntk.clone().unwrap_or_default(), out_dir(common, Some(&cfg)))
                }
                None => (NtkConfig::default(), out_dir(common, None)),
            };
            let report = runtime_stage(run_ntk_analysis(&ntk))?;
            runtime_stage(write_json(&out.join("ntk.json"), &report))?;
            say(format!(
                "top-{} max relative error {:?}, final drift {:.3e}, inversions {}",
                ntk.top_k,
                report.relative_errors,
                report.drift.last().copied().unwrap_or(0.0),
                report.ordering.inversions
            ));
            for w in &report.warnings {
                say(format!("warning: {w}"));
            }
            Ok((out, true))
        }
        Command::Compare(common) => {
            let (cfg, data, out) = prepare(common)?;
            let result = runtime_stage(run_experiment(&cfg, &data, Some(&out), common.jobs))?;
            say(format!(
                "{:<16} {:>5} {:>10} {:>10}",
                "method", "runs", "mean_test", "std_test"
            ));
            for m in &result.summary.methods {
                say(format!(
                    "{:<16} {:>5} {:>10} {:>10}",
                    m.method,
                    m.completed,
                    fmt(m.mean_test_accuracy),
                    fmt(m.std_test_accuracy)
                ));
            }
            for p in &result.summary.paired_differences {
                say(format!("pro_kd - {}: {}", p.baseline, fmt(p.mean_difference)));
            }
            for f in &result.summary.failed {
                say(format!("failed: {} seed {}: {}", f.method, f.seed, f.error));
            }
            Ok((out, result.summary.failed.is_empty()))
        }
        Command::AblateTemperature(common) => {
            let (cfg, data, out) = prepare(common)?;
            let report = runtime_stage(run_ablation(&cfg, &data, Some(&out), common.jobs))?;
            say(format!(
                "pro_kd {} | without temperature {} | difference {}",
                fmt(report.mean_with_temperature),
                fmt(report.mean_without_temperature),
                fmt(report.mean_difference)
            ));
            for f in &report.failed {
                say(format!("failed: {} seed {}: {}", f.method, f.seed, f.error));
            }
            Ok((out, report.failed.is_empty()))
        }
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::GenData(_) => "gen-data",
        Command::TrainTeacher(_) => "train-teacher",
        Command::Distill { .. } => "distill",
        Command::CheckpointSearch(_) => "checkpoint-search",
        Command::NtkAnalyze(_) => "ntk-analyze",
        Command::Compare(_) => "compare",
        Command::AblateTemperature(_) => "ablate-temperature",
    }
}

fn write_metadata(out: &Path, command: &str, started: u128, clock: Instant) -> Result<()> {
    let meta = Metadata {
        command: command.to_owned(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        host: std::env::var("HOSTNAME").ok(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&out.join("metadata.json"), &meta)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 for usage or configuration errors,
/// 2 for failures while running (including any failed experiment cell).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`cli_main`] with explicit output streams.
pub fn cli_main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_CONFIG
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let started = now_ms();
    let clock = Instant::now();
    match run(&cli.command, stdout) {
        Ok((out, clean)) => {
            if let Err(e) = write_metadata(&out, command_name(&cli.command), started, clock) {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_RUNTIME;
            }
            if clean {
                EXIT_OK
            } else {
                let _ = writeln!(stderr, "error: some runs failed; see summary");
                EXIT_RUNTIME
            }
        }
        Err(Failure::Config(e)) => {
            let _ = writeln!(stderr, "config error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}
