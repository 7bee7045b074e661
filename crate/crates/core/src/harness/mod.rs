//! Datasets, experiment configuration, the experiment runner and the CLI.

mod analysis;
mod cli;
mod config;
mod dataset;
mod experiment;
mod synthetic;

pub use analysis::{run_ntk_analysis, NtkReport};
pub use cli::{cli_main, cli_main_with, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
pub use config::{ArchSpec, DatasetSource, ExperimentConfig, NtkConfig};
pub use dataset::{hash_split, load_csv, Dataset, Samples, Split};
pub use experiment::{
    run_ablation, run_checkpoint_search, run_experiment, run_teachers, summarize, AblationReport, AblationRow,
    CellOutcome, ExperimentResult, FailedCell, MethodSummary, PairedDifference, Summary, NO_TEMPERATURE_LABEL,
};
pub use synthetic::{gen_synthetic, CapacityGapBenchmark};
