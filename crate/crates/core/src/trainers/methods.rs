use super::engine::{check_input, Objective, RunSettings, RunSink, Splits, Trainer};
use super::plan::{Method, TrainingPlan};
use super::report::{Phase, RunReport};
use crate::distill::{annealing_target, VanillaKdConfig};
use crate::harness::Dataset;
use crate::nn::{Checkpoint, MlpModel, MlpSpec};
use crate::{Error, Result};

/// A finished run: its report and the final model.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub model: MlpModel,
}

/// Teacher run: one checkpoint per epoch, in epoch order.
#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub checkpoints: Vec<Checkpoint>,
    pub report: RunReport,
}

impl TeacherRun {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("teacher runs have at least one epoch")
    }
}

#[derive(Debug, Clone)]
pub struct TakdOutput {
    /// Teacher to assistant stage.
    pub assistant: RunOutput,
    /// Assistant to student stage.
    pub student: RunOutput,
}

fn checkpoint_at(checkpoints: &[Checkpoint], epoch: usize) -> Result<&Checkpoint> {
    checkpoints
        .iter()
        .find(|c| c.epoch == epoch)
        .ok_or_else(|| Error::Plan(format!("teacher checkpoint for epoch {epoch} is missing")))
}

fn check_teacher(teacher: &MlpModel, data: &Dataset) -> Result<()> {
    check_input(teacher.spec(), data).map_err(|e| Error::Plan(format!("teacher: {e}")))
}

fn finish(trainer: Trainer<'_>) -> Result<RunOutput> {
    let (model, report, _) = trainer.finish()?;
    Ok(RunOutput { report, model })
}

pub fn train_teacher(
    spec: &MlpSpec,
    data: &Dataset,
    epochs: usize,
    settings: &RunSettings,
    sink: &mut RunSink<'_>,
) -> Result<TeacherRun> {
    if epochs == 0 {
        return Err(Error::Plan("teacher epochs must be >= 1".into()));
    }
    check_input(spec, data)?;
    let splits = Splits::new(data)?;
    let mut trainer = Trainer::new("teacher", spec, *settings, &splits)?.keep_checkpoints();
    trainer.run(Objective::CrossEntropy, epochs, Phase::Supervised, None, sink)?;
    let (_, report, checkpoints) = trainer.finish()?;
    Ok(TeacherRun { checkpoints, report })
}

/// Student trained on labels alone.
pub fn train_student_no_kd(
    spec: &MlpSpec,
    epochs: usize,
    settings: &RunSettings,
    data: &Dataset,
    sink: &mut RunSink<'_>,
) -> Result<RunOutput> {
    check_input(spec, data)?;
    let splits = Splits::new(data)?;
    let mut trainer = Trainer::new(Method::NoKd.as_str(), spec, *settings, &splits)?;
    trainer.run(Objective::CrossEntropy, epochs, Phase::Supervised, None, sink)?;
    finish(trainer)
}

#[allow(clippy::too_many_arguments)]
fn vanilla(
    label: &str,
    spec: &MlpSpec,
    teacher: &MlpModel,
    cfg: &VanillaKdConfig,
    epochs: usize,
    settings: &RunSettings,
    splits: &Splits,
    sink: &mut RunSink<'_>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let teacher_logits = splits.train_logits(teacher)?;
    let mut trainer = Trainer::new(label, spec, *settings, splits)?;
    let objective = Objective::Vanilla {
        teacher_logits: &teacher_logits,
        cfg: *cfg,
    };
    trainer.run(objective, epochs, Phase::Distill, None, sink)?;
    finish(trainer)
}

pub fn train_student_vanilla(
    spec: &MlpSpec,
    teacher: &Checkpoint,
    cfg: &VanillaKdConfig,
    epochs: usize,
    settings: &RunSettings,
    data: &Dataset,
    sink: &mut RunSink<'_>,
) -> Result<RunOutput> {
    check_input(spec, data)?;
    check_teacher(&teacher.model, data)?;
    let splits = Splits::new(data)?;
    vanilla(
        Method::VanillaKd.as_str(),
        spec,
        &teacher.model,
        cfg,
        epochs,
        settings,
        &splits,
        sink,
    )
}

/// Teacher → assistant → student, two vanilla KD runs with the same settings.
/// Checkpoints go to `assistant/` and `student/` under the sink directory.
#[allow(clippy::too_many_arguments)]
pub fn train_student_takd(
    spec: &MlpSpec,
    assistant_spec: &MlpSpec,
    teacher: &Checkpoint,
    cfg: &VanillaKdConfig,
    epochs: usize,
    settings: &RunSettings,
    data: &Dataset,
    sink: &mut RunSink<'_>,
) -> Result<TakdOutput> {
    check_input(spec, data)?;
    check_input(assistant_spec, data)?;
    check_teacher(&teacher.model, data)?;
    let (s, a, t) = (
        spec.parameter_count(),
        assistant_spec.parameter_count(),
        teacher.model.parameter_count(),
    );
    if !(s < a && a < t) {
        return Err(Error::Plan(format!(
            "assistant must be strictly between student and teacher in size; got {s} < {a} < {t}"
        )));
    }
    let splits = Splits::new(data)?;
    let assistant = vanilla(
        "takd_assistant",
        assistant_spec,
        &teacher.model,
        cfg,
        epochs,
        settings,
        &splits,
        &mut sink.child("assistant"),
    )?;
    let student = vanilla(
        Method::Takd.as_str(),
        spec,
        &assistant.model,
        cfg,
        epochs,
        settings,
        &splits,
        &mut sink.child("student"),
    )?;
    Ok(TakdOutput { assistant, student })
}

/// Vanilla KD against each anchor checkpoint in turn, `epochs_per_anchor` epochs each.
#[allow(clippy::too_many_arguments)]
pub fn train_student_rco(
    spec: &MlpSpec,
    teacher_checkpoints: &[Checkpoint],
    anchors: &[usize],
    cfg: &VanillaKdConfig,
    epochs_per_anchor: usize,
    settings: &RunSettings,
    data: &Dataset,
    sink: &mut RunSink<'_>,
) -> Result<RunOutput> {
    check_input(spec, data)?;
    cfg.validate()?;
    if anchors.is_empty() {
        return Err(Error::Plan("rco needs at least one anchor".into()));
    }
    if let Some(w) = anchors.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Plan(format!(
            "rco anchors must be strictly increasing; {} is followed by {}",
            w[0], w[1]
        )));
    }
    let stages = anchors
        .iter()
        .map(|&e| checkpoint_at(teacher_checkpoints, e))
        .collect::<Result<Vec<_>>>()?;
    let splits = Splits::new(data)?;
    let mut trainer = Trainer::new(Method::Rco.as_str(), spec, *settings, &splits)?;
    for ckpt in stages {
        check_teacher(&ckpt.model, data)?;
        let teacher_logits = splits.train_logits(&ckpt.model)?;
        let objective = Objective::Vanilla {
            teacher_logits: &teacher_logits,
            cfg: *cfg,
        };
        trainer.run(objective, epochs_per_anchor, Phase::Distill, None, sink)?;
    }
    finish(trainer)
}

fn phase2(trainer: &mut Trainer<'_>, plan: &TrainingPlan, sink: &mut RunSink<'_>) -> Result<()> {
    trainer.run(Objective::CrossEntropy, plan.phase2_epochs, Phase::Phase2, None, sink)
}

fn check_plan(plan: &TrainingPlan, method: Method) -> Result<()> {
    if plan.method != method {
        return Err(Error::Plan(format!("expected a {method} plan, got {}", plan.method)));
    }
    plan.validate()
}

/// Phase I: for step `i` at temperature `T_i`, regress onto the logits of
/// teacher epoch `warmup + i` divided by `T_i`. Phase II: cross entropy.
pub fn train_student_prokd(
    spec: &MlpSpec,
    teacher_checkpoints: &[Checkpoint],
    plan: &TrainingPlan,
    data: &Dataset,
    sink: &mut RunSink<'_>,
) -> Result<RunOutput> {
    check_plan(plan, Method::ProKd)?;
    check_input(spec, data)?;
    let schedule = plan.schedule.as_ref().expect("validated");
    let sources = schedule
        .steps()
        .map(|(step, _, _)| checkpoint_at(teacher_checkpoints, plan.warmup_epochs + step))
        .collect::<Result<Vec<_>>>()?;
    let splits = Splits::new(data)?;
    let mut trainer = Trainer::new(Method::ProKd.as_str(), spec, plan.settings(), &splits)?;
    for ((_, temperature, epochs), ckpt) in schedule.steps().zip(sources) {
        check_teacher(&ckpt.model, data)?;
        let temperature = if plan.disable_temperature { 1 } else { temperature };
        let teacher_logits = splits.train_logits(&ckpt.model)?;
        let objective = Objective::ProKd {
            teacher_logits: &teacher_logits,
            temperature,
        };
        trainer.run(objective, epochs, Phase::Phase1, Some(temperature), sink)?;
    }
    phase2(&mut trainer, plan, sink)?;
    finish(trainer)
}

/// Phase I: for step `i`, regress onto the final teacher logits scaled by
/// `i / tau_max`. Phase II: cross entropy.
pub fn train_student_annealing(
    spec: &MlpSpec,
    teacher_final: &Checkpoint,
    plan: &TrainingPlan,
    data: &Dataset,
    sink: &mut RunSink<'_>,
) -> Result<RunOutput> {
    check_plan(plan, Method::AnnealingKd)?;
    check_input(spec, data)?;
    check_teacher(&teacher_final.model, data)?;
    let schedule = plan.schedule.as_ref().expect("validated");
    let splits = Splits::new(data)?;
    let teacher_logits = splits.train_logits(&teacher_final.model)?;
    let mut trainer = Trainer::new(Method::AnnealingKd.as_str(), spec, plan.settings(), &splits)?;
    for (step, temperature, epochs) in schedule.steps() {
        let target = annealing_target(&teacher_logits, step as u32, schedule.tau_max())?;
        trainer.run(
            Objective::Regression { target: &target },
            epochs,
            Phase::Phase1,
            Some(temperature),
            sink,
        )?;
    }
    phase2(&mut trainer, plan, sink)?;
    finish(trainer)
}
