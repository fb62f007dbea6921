use handpose::error::Error;
use handpose::gradcheck::tiny_model_config;
use handpose::handgen::{Dataset, GenConfig};
use handpose::pipeline::{Checkpoint, Model, ModelConfig, Variant};
use handpose::trainer::{
    evaluate, evaluate_ground_truth, EpochLog, train_stage1, train_stage2, train_two_stage, transfer_stage1, TrainingConfig,
};

fn data() -> Dataset {
    Dataset::generate(&GenConfig {
        subjects: vec![1],
        activities: vec![1, 2],
        clips_per_pair: 1,
        views: vec![7, 8],
        window: 3,
        resolution: 16,
        seed: 2,
        occlusion: 0.0,
    })
    .unwrap()
}

fn model() -> ModelConfig {
    tiny_model_config(Variant::Full)
}

fn schedules() -> (TrainingConfig, TrainingConfig) {
    (
        TrainingConfig { epochs: 6, batch: 3, decay_period: 4, lr: 0.01, ..TrainingConfig::stage1() },
        TrainingConfig { epochs: 6, batch: 1, decay_period: 4, lr: 0.01, ..TrainingConfig::stage2() },
    )
}

#[test]
fn stage2_without_stage1_is_a_workflow_error() {
    let d = data();
    let (_, s2) = schedules();
    let r = train_stage2(&model(), None, &d, &[0, 1], &s2);
    assert!(matches!(r, Err(Error::Workflow(_))));
    assert_eq!(r.unwrap_err().exit_code(), 3);
}

#[test]
fn transfer_rejects_a_non_surrogate_checkpoint() {
    let m = Model::<f32>::new(model(), 1).unwrap();
    let ck = Checkpoint::new(m.clone(), 2, 1, 1);
    let mut target = m;
    assert!(matches!(transfer_stage1(&mut target, &ck), Err(Error::Workflow(_))));
}

#[test]
fn two_stage_run_freezes_the_encoder_and_lowers_the_loss() {
    let d = data();
    let (s1, s2) = schedules();
    let out = train_two_stage(&model(), &d, &[0, 1], &s1, &s2).unwrap();
    assert_eq!(out.log.len(), 12);
    assert_eq!(out.stage2.stage, 2);
    for (name, t) in out.stage1.model.store.iter().filter(|(n, _)| n.starts_with("encoder.")) {
        let after = out.stage2.model.store.get(name).unwrap();
        let same = t.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "{name}");
        assert!(out.stage2.model.store.is_frozen(name));
    }
    let (l1, l2): (Vec<&EpochLog>, Vec<_>) = out.log.iter().partition(|l| l.stage == 1);
    assert!(l1.last().unwrap().loss < l1[0].loss);
    assert!(l2.last().unwrap().loss < l2[0].loss);
    assert_eq!(l2[4].lr, s2.lr * 0.1);
}

#[test]
fn training_is_deterministic() {
    let d = data();
    let (s1, _) = schedules();
    let s1 = TrainingConfig { epochs: 2, ..s1 };
    let (a, la) = train_stage1(&model(), &d, &[0, 1], &s1).unwrap();
    let (b, lb) = train_stage1(&model(), &d, &[0, 1], &s1).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(evaluate(&a.model, &d, &[0, 1]).unwrap(), evaluate(&b.model, &d, &[0, 1]).unwrap());
}

#[test]
fn full_length_schedule_decays_tenfold_at_epoch_100() {
    for stage in [1, 2] {
        let c = TrainingConfig::full_length(stage);
        assert_eq!(c.lr_at(99), c.lr);
        assert!((c.lr_at(100) - 0.1 * c.lr).abs() < 1e-15);
    }
    assert_eq!((TrainingConfig::full_length(1).epochs, TrainingConfig::full_length(2).epochs), (500, 400));
    assert_eq!((TrainingConfig::stage1().epochs, TrainingConfig::stage2().epochs), (60, 40));
}

#[test]
fn ground_truth_evaluation_is_perfect() {
    let d = data();
    let r = evaluate_ground_truth(&d, &[0, 1], 2, 3).unwrap();
    assert_eq!((r.epe_mean, r.epe_median, r.auc), (0.0, 0.0, 1.0));
}

#[test]
fn mismatched_resolution_or_bad_clip_is_rejected() {
    let d = data();
    let (s1, _) = schedules();
    let mut m = model();
    m.encoder.resolution = 32;
    assert!(matches!(train_stage1(&m, &d, &[0], &s1), Err(Error::Config(_))));
    assert!(matches!(train_stage1(&model(), &d, &[5], &s1), Err(Error::Contract(_))));
}
