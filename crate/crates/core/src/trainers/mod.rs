//! Teacher training, the six student procedures and the checkpoint search.
//!
//! Every run is deterministic in its seed: the model is initialized from it
//! and the sample order of global epoch `e` comes from [`epoch_order`].
//! Epochs are numbered from 1 across all phases of a run.

mod engine;
mod methods;
mod plan;
mod report;
mod search;

pub use engine::{accuracy, epoch_order, BatchEvent, RunSettings, RunSink};
pub use methods::{
    train_student_annealing, train_student_no_kd, train_student_prokd, train_student_rco, train_student_takd,
    train_student_vanilla, train_teacher, RunOutput, TakdOutput, TeacherRun,
};
pub use plan::{Method, TrainingPlan};
pub use report::{EpochRecord, Phase, RunReport};
pub use search::{checkpoint_search, SearchReport, SearchRow, SearchRun};
