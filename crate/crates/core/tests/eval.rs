//! Downstream evaluation: crops, AUC, heads and the training protocol.

mod common;

use common::{corpus, sampler, tiny_model, two_class};
use ecg_jepa::eval::{
    binary_auc, eval_crops, predict_record, run_seeds, train_crop, train_head, Backbone, ClassifierHead, EvalConfig,
    EvalMode, EvalSummary, FittedHead, Pooling, SeedResult,
};
use ecg_jepa::ingest::{DatabaseId, EcgRecord};
use ecg_jepa::par::Exec;
use ecg_jepa::trainer::{pretrain, TrainConfig, Trainer};
use ecg_jepa::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn ramp(seconds: f64) -> EcgRecord {
    let n = (seconds * 500.0) as usize;
    EcgRecord::new((0..n).map(|i| i as f32).collect(), 1, 500.0, DatabaseId::Synthetic, "ramp").unwrap()
}

/// Chi-square goodness of fit of `counts` against a uniform law at α = 0.01.
fn uniform_by_chi_square(counts: &[usize]) -> bool {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let crit = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.99);
    stat < crit
}

#[test]
fn training_crop_offsets_are_uniform() {
    let rec = ramp(10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = vec![0usize; 16];
    for _ in 0..10_000 {
        let c = train_crop(&rec, 1250, &mut rng);
        assert_eq!(c.len(), 1250);
        let offset = c.samples[0] as usize;
        assert!(offset <= 3750);
        counts[offset * 16 / 3751] += 1;
    }
    assert!(uniform_by_chi_square(&counts), "{counts:?}");
    let short = ramp(2.5);
    assert_eq!(train_crop(&short, 1250, &mut rng), short);
}

#[test]
fn evaluation_crop_offsets() {
    let starts: Vec<f32> = eval_crops(&ramp(10.0), 1250, 625).iter().map(|c| c.samples[0]).collect();
    assert_eq!(starts, (0..7).map(|i| (i * 625) as f32).collect::<Vec<_>>());
}

#[test]
fn auc_of_independent_scores_is_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let labels: Vec<u8> = (0..10_000).map(|_| rng.random_bool(0.3) as u8).collect();
    let auc = binary_auc(&scores, &labels).unwrap();
    assert!((auc - 0.5).abs() < 0.02, "{auc}");
    let sorted: Vec<u8> = (0..100).map(|i| (i >= 60) as u8).collect();
    let ranks: Vec<f64> = (0..100).map(|i| i as f64).collect();
    assert_eq!(binary_auc(&ranks, &sorted), Some(1.0));
}

fn quick_config(mode: EvalMode, steps: u64) -> EvalConfig {
    let base = EvalConfig::for_mode(mode);
    EvalConfig {
        steps,
        batch_size: 16,
        eval_every: 10,
        warmup_steps: base.warmup_steps.min(steps / 4),
        ..base
    }
}

#[test]
fn crop_averaging_of_constant_records() {
    let backbone = Backbone::<f64>::random(&tiny_model(), 3).unwrap();
    let head = ClassifierHead::new(Pooling::Attention, 32, 3, &mut ChaCha8Rng::seed_from_u64(4));
    let cfg = EvalConfig::for_mode(EvalMode::Linear);
    let constant = |seconds: f64| {
        let n = (seconds * 500.0) as usize;
        EcgRecord::new(vec![0.3; 12 * n], 12, 500.0, DatabaseId::Synthetic, "flat").unwrap()
    };
    // every crop of a constant record is the same 2.5 s record
    let single = predict_record(&backbone.model, &backbone.encoder, &head, &constant(2.5), &cfg, Exec::Sequential).unwrap();
    let many = predict_record(&backbone.model, &backbone.encoder, &head, &constant(10.0), &cfg, Exec::Sequential).unwrap();
    for (a, b) in single.iter().zip(&many) {
        assert!((a - b).abs() < 1e-12);
        assert!(*a > 0.0 && *a < 1.0);
    }
}

#[test]
fn linear_mode_freezes_the_encoder() {
    let data = two_class(60, 20, 3.0, 1.0, 5);
    let backbone = Backbone::<f32>::random(&tiny_model(), 6).unwrap();
    let fitted = train_head(&backbone, &data, &quick_config(EvalMode::Linear, 20), 1, None, Exec::Parallel).unwrap();
    for (a, b) in fitted.encoder.iter().zip(backbone.encoder.iter()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
    let tuned = train_head(&backbone, &data, &quick_config(EvalMode::Finetune, 20), 1, None, Exec::Parallel).unwrap();
    if tuned.best_step > 0 {
        assert!(tuned.encoder.iter().zip(backbone.encoder.iter()).any(|(a, b)| a.value.data() != b.value.data()));
    }
}

#[test]
fn two_stage_needs_a_linear_start() {
    let data = two_class(60, 20, 3.0, 1.0, 7);
    let backbone = Backbone::<f32>::random(&tiny_model(), 8).unwrap();
    let cfg = quick_config(EvalMode::TwoStage, 20);
    let err = train_head(&backbone, &data, &cfg, 1, None, Exec::Parallel).unwrap_err();
    assert!(matches!(err, Error::MissingLinearArtifact));
    let linear = train_head(&backbone, &data, &quick_config(EvalMode::Linear, 20), 1, None, Exec::Parallel).unwrap();
    let staged = train_head(&backbone, &data, &cfg, 1, Some(&linear), Exec::Parallel).unwrap();
    assert_eq!(staged.mode, EvalMode::TwoStage);
    assert!(staged.best_val_auc >= linear.best_val_auc);
}

#[test]
fn head_artifact_round_trip_reproduces_predictions() {
    let data = two_class(60, 20, 3.0, 1.0, 9);
    let backbone = Backbone::<f32>::random(&tiny_model(), 10).unwrap();
    let cfg = quick_config(EvalMode::Linear, 20);
    let fitted = train_head(&backbone, &data, &cfg, 2, None, Exec::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fitted.to_checkpoint(&backbone.model.config).save(dir.path()).unwrap();
    let loaded = FittedHead::<f32>::from_checkpoint(&ecg_jepa::model::Checkpoint::load(dir.path()).unwrap()).unwrap();
    assert_eq!((loaded.best_step, loaded.best_val_auc), (fitted.best_step, fitted.best_val_auc));
    let rec = data.record(0);
    let a = predict_record(&backbone.model, &fitted.encoder, &fitted.head, rec, &cfg, Exec::Sequential).unwrap();
    let b = predict_record(&backbone.model, &loaded.encoder, &loaded.head, rec, &cfg, Exec::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pretrained_encoder_separates_a_separable_task() {
    let cfg = TrainConfig {
        total_steps: 60,
        batch_size: 8,
        warmup_steps: 6,
        crop_seconds: 2.0,
        checkpoint_every: 1000,
        log_every: 20,
        seed: 11,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut trainer = Trainer::<f32>::new(&tiny_model(), &cfg, Exec::Parallel).unwrap();
    pretrain(&mut trainer, &sampler(corpus(32, 12)), dir.path(), &[]).unwrap();
    let backbone = Backbone::from_checkpoint(&trainer.checkpoint(vec![]), true).unwrap();
    let data = two_class(120, 40, 5.0, 1.0, 13);
    let eval = EvalConfig {
        lr_start: 1e-2,
        lr_end: 1e-2,
        ..quick_config(EvalMode::Linear, 60)
    };
    let (summary, runs) = run_seeds(&backbone, &data, &eval, &[1, 2], None, Exec::Parallel).unwrap();
    assert!(summary.mean >= 0.9, "{:?}", summary.aucs);
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0].predictions.len(), 40);
}

#[test]
fn summary_uses_sample_standard_deviation() {
    let seeds = [0.90, 0.92, 0.94]
        .iter()
        .enumerate()
        .map(|(i, &a)| SeedResult {
            seed: i as u64,
            val_auc: a,
            test_auc: a,
            best_step: 0,
        })
        .collect();
    let s = EvalSummary::new(EvalMode::Linear, seeds);
    assert!((s.mean - 0.92).abs() < 1e-12);
    assert!((s.std - 0.02).abs() < 1e-12);
}
