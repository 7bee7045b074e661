//! Distillation losses and the progressive temperature/epoch schedule.
//!
//! Teacher logits are always treated as constants: every gradient returned
//! here is with respect to the student logits only.

mod losses;
mod schedule;

pub use losses::{annealing_target, prokd_phase1_loss, vanilla_kd_loss, VanillaKdConfig};
pub use schedule::{allocate_epochs, temperature_sequence, TemperatureSchedule};
