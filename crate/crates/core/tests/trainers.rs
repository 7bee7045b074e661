mod common;

use std::fs;

use common::*;
use distill_core::distill::{
    annealing_target, prokd_phase1_loss, vanilla_kd_loss, TemperatureSchedule, VanillaKdConfig,
};
use distill_core::harness::{Dataset, Split};
use distill_core::nn::{init_model, load_checkpoint, Activation, MlpSpec, Sgd, SgdConfig};
use distill_core::numerics::{mse_logits, Matrix};
use distill_core::trainers::*;
use distill_core::Error;

fn plan(method: Method, schedule: Option<TemperatureSchedule>, phase2: usize, warmup: usize) -> TrainingPlan {
    let s = settings(5);
    TrainingPlan {
        method,
        teacher_epochs: 4,
        schedule,
        phase2_epochs: phase2,
        warmup_epochs: warmup,
        sgd: s.sgd,
        seed: s.seed,
        batch_size: s.batch_size,
        disable_temperature: false,
    }
}

fn first_batch_loss(run: impl FnOnce(&mut RunSink<'_>)) -> f64 {
    let mut first = None;
    let mut observe = |e: &BatchEvent| {
        if first.is_none() {
            assert_eq!((e.epoch, e.batch), (1, 1));
            first = Some(e.loss);
        }
    };
    run(&mut RunSink::none().with_observer(&mut observe));
    first.unwrap()
}

/// Rows of the first batch of epoch 1 for a run with `settings(5)`.
fn first_batch(data: &Dataset) -> (Matrix, Vec<usize>, Vec<usize>) {
    let train = data.subset(Split::Train);
    let order = epoch_order(5, 1, train.len());
    let rows = order[..settings(5).batch_size].to_vec();
    let labels = rows.iter().map(|&i| train.labels[i]).collect();
    (train.features.select_rows(&rows), labels, rows)
}

fn same_trajectory(a: &RunOutput, b: &RunOutput) {
    assert_eq!(a.model.parameter_bits(), b.model.parameter_bits());
    assert_eq!(a.report.per_epoch.len(), b.report.per_epoch.len());
    for (x, y) in a.report.per_epoch.iter().zip(&b.report.per_epoch) {
        assert_eq!(x.epoch, y.epoch);
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.dev_accuracy.to_bits(), y.dev_accuracy.to_bits());
    }
    assert_eq!(a.report.final_test_accuracy, b.report.final_test_accuracy);
}

#[test]
fn teacher_writes_one_checkpoint_per_epoch() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let run = train_teacher(
        &teacher_spec(),
        &data,
        3,
        &settings(1),
        &mut RunSink::to_dir(dir.path()),
    )
    .unwrap();
    assert_eq!(
        run.checkpoints.iter().map(|c| c.epoch).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
    assert_eq!(run.report.checkpoint_paths.len(), 3);
    for (path, ckpt) in run.report.checkpoint_paths.iter().zip(&run.checkpoints) {
        let loaded = load_checkpoint(path).unwrap();
        assert_eq!(&loaded, ckpt);
        assert!(loaded.dev_metric.is_some());
    }
    let rec = &run.report.per_epoch;
    assert_eq!(
        rec.iter().map(|r| r.dev_accuracy).collect::<Vec<_>>(),
        run.checkpoints
            .iter()
            .map(|c| c.dev_metric.unwrap())
            .collect::<Vec<_>>()
    );
    assert!(rec
        .iter()
        .all(|r| r.phase == Phase::Supervised && (0.0..=1.0).contains(&r.dev_accuracy)));
    assert!(train_teacher(&teacher_spec(), &data, 0, &settings(1), &mut RunSink::none()).is_err());
}

#[test]
fn teacher_io_errors_name_the_path() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = train_teacher(
        &teacher_spec(),
        &data,
        1,
        &settings(1),
        &mut RunSink::to_dir(blocker.join("out")),
    )
    .unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn teacher_separates_linearly_separable_data() {
    // Label = sign of w·x with a margin; the separator w itself scores 1.0.
    let w = [1.0, -2.0, 0.5];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut rng_state = 12345u64;
    let mut next = || {
        rng_state = rng_state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    while labels.len() < 400 {
        let x = [next(), next(), next()];
        let s: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        if s.abs() < 0.2 {
            continue;
        }
        rows.push(x.to_vec());
        labels.push(usize::from(s > 0.0));
        splits.push(match labels.len() % 10 {
            0 => Split::Dev,
            1 => Split::Test,
            _ => Split::Train,
        });
    }
    let data = Dataset::new(Matrix::from_rows(&rows).unwrap(), labels.clone(), 2, splits).unwrap();
    let oracle = (0..rows.len())
        .filter(|&i| usize::from(rows[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() > 0.0) == labels[i])
        .count();
    assert_eq!(oracle, rows.len());

    let spec = MlpSpec::new(3, vec![16], 2, Activation::Relu);
    let run = train_teacher(&spec, &data, 20, &settings(3), &mut RunSink::none()).unwrap();
    assert!(
        run.report.final_dev_accuracy >= 0.95,
        "{}",
        run.report.final_dev_accuracy
    );
}

#[test]
fn vanilla_alpha_one_is_no_kd() {
    let data = small_data();
    let t = teacher(&data, 2);
    let cfg = VanillaKdConfig {
        alpha: 1.0,
        temperature: 3.0,
    };
    let kd = train_student_vanilla(
        &student_spec(),
        t.final_checkpoint(),
        &cfg,
        4,
        &settings(5),
        &data,
        &mut RunSink::none(),
    )
    .unwrap();
    let plain = train_student_no_kd(&student_spec(), 4, &settings(5), &data, &mut RunSink::none()).unwrap();
    same_trajectory(&kd, &plain);
}

#[test]
fn first_batch_losses_match_direct_evaluation() {
    let data = small_data();
    let t = teacher(&data, 3);
    let (x, labels, _) = first_batch(&data);
    let y = distill_core::numerics::one_hot(&labels, 3).unwrap();
    let student0 = init_model(&student_spec(), 5).unwrap();
    let z_s = student0.predict(&x).unwrap();
    let cfg = VanillaKdConfig::default();

    let got = first_batch_loss(|sink| {
        train_student_vanilla(
            &student_spec(),
            t.final_checkpoint(),
            &cfg,
            1,
            &settings(5),
            &data,
            sink,
        )
        .unwrap();
    });
    let z_t = t.final_checkpoint().model.predict(&x).unwrap();
    assert_eq!(got, vanilla_kd_loss(&y, &z_s, &z_t, &cfg).unwrap().loss);

    let schedule = TemperatureSchedule::new(2, 2, 1).unwrap();
    let p = plan(Method::ProKd, Some(schedule.clone()), 0, 1);
    let got = first_batch_loss(|sink| {
        train_student_prokd(&student_spec(), &t.checkpoints, &p, &data, sink).unwrap();
    });
    let z_t = t.checkpoints[1].model.predict(&x).unwrap();
    assert_eq!(got, prokd_phase1_loss(&z_s, &z_t, 2).unwrap().loss);

    let p = plan(Method::AnnealingKd, Some(schedule), 0, 0);
    let got = first_batch_loss(|sink| {
        train_student_annealing(&student_spec(), t.final_checkpoint(), &p, &data, sink).unwrap();
    });
    let z_t = t.final_checkpoint().model.predict(&x).unwrap();
    assert_eq!(
        got,
        mse_logits(&z_s, &annealing_target(&z_t, 1, 2).unwrap()).unwrap().loss
    );

    let got = first_batch_loss(|sink| {
        train_student_no_kd(&student_spec(), 1, &settings(5), &data, sink).unwrap();
    });
    let ce =
        distill_core::numerics::cross_entropy(&y, &distill_core::numerics::softmax_rows(&z_s, 1.0).unwrap()).unwrap();
    assert_eq!(got, ce.loss);
}

#[test]
fn prokd_collapses_to_single_checkpoint_regression() {
    let data = small_data();
    let t = teacher(&data, 3);
    let mut p = plan(Method::ProKd, Some(TemperatureSchedule::new(1, 3, 1).unwrap()), 0, 2);
    p.disable_temperature = true;
    let run = train_student_prokd(&student_spec(), &t.checkpoints, &p, &data, &mut RunSink::none()).unwrap();

    // Hand-rolled loop: MSE onto raw logits of teacher epoch 3.
    let train = data.subset(Split::Train);
    let target = t.checkpoints[2].model.predict(&train.features).unwrap();
    let mut model = init_model(&student_spec(), 5).unwrap();
    let mut sgd = Sgd::new(settings(5).sgd).unwrap();
    for epoch in 1..=3 {
        for rows in epoch_order(5, epoch, train.len()).chunks(16) {
            let (z, cache) = model.forward(&train.features.select_rows(rows)).unwrap();
            let lg = mse_logits(&z, &target.select_rows(rows)).unwrap();
            let g = model.backward(&cache, &lg.grad).unwrap();
            sgd.step(&mut model, &g).unwrap();
        }
    }
    assert_eq!(run.model.parameter_bits(), model.parameter_bits());
    assert!(run.report.per_epoch.iter().all(|r| r.temperature == Some(1)));
}

#[test]
fn prokd_schedule_shapes_the_report() {
    let data = small_data();
    let t = teacher(&data, 4);
    let schedule = TemperatureSchedule::new(3, 7, 2).unwrap();
    let p = plan(Method::ProKd, Some(schedule), 2, 1);
    let run = train_student_prokd(&student_spec(), &t.checkpoints, &p, &data, &mut RunSink::none()).unwrap();
    let rec = &run.report.per_epoch;
    assert_eq!(rec.len(), 9);
    assert_eq!(
        rec.iter().map(|r| r.epoch).collect::<Vec<_>>(),
        (1..=9).collect::<Vec<_>>()
    );
    let temps: Vec<Option<u32>> = rec.iter().map(|r| r.temperature).collect();
    let mut expected = vec![Some(3)];
    expected.extend([Some(2); 2]);
    expected.extend([Some(1); 4]);
    expected.extend([None; 2]);
    assert_eq!(temps, expected);
    assert_eq!(rec.iter().filter(|r| r.phase == Phase::Phase1).count(), 7);
    assert_eq!(rec.iter().filter(|r| r.phase == Phase::Phase2).count(), 2);
    assert_eq!(run.report.final_dev_accuracy, rec[8].dev_accuracy);
}

#[test]
fn prokd_missing_checkpoint_names_the_epoch() {
    let data = small_data();
    let t = teacher(&data, 4);
    let p = plan(Method::ProKd, Some(TemperatureSchedule::new(3, 3, 1).unwrap()), 0, 1);
    let partial: Vec<_> = t.checkpoints.iter().filter(|c| c.epoch != 3).cloned().collect();
    let err = train_student_prokd(&student_spec(), &partial, &p, &data, &mut RunSink::none()).unwrap_err();
    assert!(matches!(err, Error::Plan(_)));
    assert!(err.to_string().contains("epoch 3"), "{err}");
}

#[test]
fn prokd_leaves_teacher_checkpoints_untouched() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let t = train_teacher(
        &teacher_spec(),
        &data,
        3,
        &settings(99),
        &mut RunSink::to_dir(dir.path().join("teacher")),
    )
    .unwrap();
    let before: Vec<Vec<u8>> = t.report.checkpoint_paths.iter().map(|p| fs::read(p).unwrap()).collect();
    let snapshot = t.checkpoints.clone();
    let p = plan(Method::ProKd, Some(TemperatureSchedule::new(3, 3, 1).unwrap()), 1, 0);
    let run = train_student_prokd(
        &student_spec(),
        &t.checkpoints,
        &p,
        &data,
        &mut RunSink::to_dir(dir.path().join("student")),
    )
    .unwrap();
    let after: Vec<Vec<u8>> = t.report.checkpoint_paths.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(snapshot, t.checkpoints);
    assert_eq!(run.report.checkpoint_paths.len(), 4);
}

#[test]
fn annealing_single_step_regresses_on_raw_logits() {
    let data = small_data();
    let t = teacher(&data, 2);
    let p = plan(
        Method::AnnealingKd,
        Some(TemperatureSchedule::new(1, 2, 1).unwrap()),
        0,
        0,
    );
    let run = train_student_annealing(&student_spec(), t.final_checkpoint(), &p, &data, &mut RunSink::none()).unwrap();
    // Pro-KD over a one-step schedule reading the same final checkpoint is the same run.
    let mut q = plan(Method::ProKd, Some(TemperatureSchedule::new(1, 2, 1).unwrap()), 0, 1);
    q.teacher_epochs = 2;
    let pro = train_student_prokd(&student_spec(), &t.checkpoints, &q, &data, &mut RunSink::none()).unwrap();
    same_trajectory(&run, &pro);
}

#[test]
fn rco_single_final_anchor_is_vanilla() {
    let data = small_data();
    let t = teacher(&data, 3);
    let cfg = VanillaKdConfig::default();
    let rco = train_student_rco(
        &student_spec(),
        &t.checkpoints,
        &[3],
        &cfg,
        4,
        &settings(5),
        &data,
        &mut RunSink::none(),
    )
    .unwrap();
    let kd = train_student_vanilla(
        &student_spec(),
        t.final_checkpoint(),
        &cfg,
        4,
        &settings(5),
        &data,
        &mut RunSink::none(),
    )
    .unwrap();
    same_trajectory(&rco, &kd);
}

#[test]
fn rco_runs_one_stage_per_anchor() {
    let data = small_data();
    let t = teacher(&data, 3);
    let cfg = VanillaKdConfig::default();
    let run = train_student_rco(
        &student_spec(),
        &t.checkpoints,
        &[1, 2, 3],
        &cfg,
        2,
        &settings(5),
        &data,
        &mut RunSink::none(),
    )
    .unwrap();
    assert_eq!(run.report.per_epoch.len(), 6);
    for bad in [&[2, 2][..], &[3, 1], &[]] {
        let err = train_student_rco(
            &student_spec(),
            &t.checkpoints,
            bad,
            &cfg,
            2,
            &settings(5),
            &data,
            &mut RunSink::none(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Plan(_)), "{bad:?}");
    }
    assert!(train_student_rco(
        &student_spec(),
        &t.checkpoints,
        &[4],
        &cfg,
        2,
        &settings(5),
        &data,
        &mut RunSink::none()
    )
    .is_err());
}

#[test]
fn takd_chains_two_vanilla_runs() {
    let data = small_data();
    let t = teacher(&data, 2);
    let cfg = VanillaKdConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let out = train_student_takd(
        &student_spec(),
        &assistant_spec(),
        t.final_checkpoint(),
        &cfg,
        3,
        &settings(5),
        &data,
        &mut RunSink::to_dir(dir.path()),
    )
    .unwrap();
    assert_eq!(out.assistant.report.method, "takd_assistant");
    assert_eq!(out.student.report.method, "takd");
    assert!(dir.path().join("assistant/epoch_003.json").exists());
    assert!(dir.path().join("student/epoch_003.json").exists());

    let ta = load_checkpoint(&dir.path().join("assistant/epoch_003.json")).unwrap();
    let direct =
        train_student_vanilla(&student_spec(), &ta, &cfg, 3, &settings(5), &data, &mut RunSink::none()).unwrap();
    same_trajectory(&out.student, &direct);
}

#[test]
fn takd_rejects_bad_capacity_order() {
    let data = small_data();
    let t = teacher(&data, 1);
    let cfg = VanillaKdConfig::default();
    for ta in [
        teacher_spec(),
        student_spec(),
        MlpSpec::new(4, vec![64, 64], 3, Activation::Relu),
    ] {
        let err = train_student_takd(
            &student_spec(),
            &ta,
            t.final_checkpoint(),
            &cfg,
            1,
            &settings(5),
            &data,
            &mut RunSink::none(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Plan(_)), "{err}");
    }
}

#[test]
fn runs_are_deterministic() {
    let data = small_data();
    let t = teacher(&data, 3);
    let p = plan(Method::ProKd, Some(TemperatureSchedule::new(2, 3, 2).unwrap()), 1, 1);
    let a = train_student_prokd(&student_spec(), &t.checkpoints, &p, &data, &mut RunSink::none()).unwrap();
    let b = train_student_prokd(&student_spec(), &t.checkpoints, &p, &data, &mut RunSink::none()).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    let mut q = p.clone();
    q.seed = 6;
    let c = train_student_prokd(&student_spec(), &t.checkpoints, &q, &data, &mut RunSink::none()).unwrap();
    assert_ne!(a.report.to_json(), c.report.to_json());
}

#[test]
fn mismatched_models_are_rejected() {
    let data = small_data();
    let wrong = MlpSpec::new(5, vec![4], 3, Activation::Relu);
    assert!(matches!(
        train_student_no_kd(&wrong, 1, &settings(1), &data, &mut RunSink::none()),
        Err(Error::Plan(_))
    ));
    let bad = RunSettings {
        sgd: SgdConfig::plain(-1.0),
        ..settings(1)
    };
    assert!(train_student_no_kd(&student_spec(), 1, &bad, &data, &mut RunSink::none()).is_err());
}

#[test]
fn checkpoint_search_has_one_row_per_checkpoint() {
    let data = small_data();
    let t = teacher(&data, 4);
    let cfg = VanillaKdConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let serial = checkpoint_search(
        &student_spec(),
        &t.checkpoints,
        &cfg,
        2,
        &settings(5),
        &data,
        Some(dir.path()),
        1,
    )
    .unwrap();
    let parallel = checkpoint_search(&student_spec(), &t.checkpoints, &cfg, 2, &settings(5), &data, None, 3).unwrap();
    assert_eq!(serial.report, parallel.report);
    let r = &serial.report;
    assert_eq!(
        r.rows.iter().map(|r| r.teacher_epoch).collect::<Vec<_>>(),
        vec![1, 2, 3, 4]
    );
    for (row, ckpt) in r.rows.iter().zip(&t.checkpoints) {
        assert_eq!(Some(row.teacher_dev), ckpt.dev_metric);
    }
    assert!(dir.path().join("cell_epoch_004/epoch_002.json").exists());
    // Each cell is a fresh vanilla run.
    let cell = train_student_vanilla(
        &student_spec(),
        &t.checkpoints[1],
        &cfg,
        2,
        &settings(5),
        &data,
        &mut RunSink::none(),
    )
    .unwrap();
    assert_eq!(parallel.cells[1], cell.report);
    assert!(checkpoint_search(
        &student_spec(),
        &t.checkpoints[..1],
        &cfg,
        2,
        &settings(5),
        &data,
        None,
        1
    )
    .is_err());
}
