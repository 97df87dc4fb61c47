//! Optimizer, EMA and training-loop behaviour.

mod common;

use common::{corpus, sampler, tiny_model};
use ecg_jepa::ingest::{random_crop, EcgRecord};
use ecg_jepa::masking::sample_mask;
use ecg_jepa::model::{Checkpoint, ParamKind, ParamSet};
use ecg_jepa::par::Exec;
use ecg_jepa::tensor::Tensor;
use ecg_jepa::trainer::{
    adamw_step, ema_update, pretrain, AdamHyper, AdamState, MetricsRow, TrainConfig, Trainer, METRICS_HEADER,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config(total: u64) -> TrainConfig {
    TrainConfig {
        total_steps: total,
        batch_size: 4,
        warmup_steps: total.min(3),
        crop_seconds: 2.0,
        checkpoint_every: 1000,
        log_every: 1,
        seed: 21,
        ..TrainConfig::default()
    }
}

fn crops(records: &[EcgRecord], seed: u64) -> Vec<EcgRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.iter().take(4).map(|r| random_crop(r, 1000, &mut rng).unwrap()).collect()
}

fn scalar_set(v: f32) -> ParamSet<f32> {
    let mut s = ParamSet::new();
    s.push("w", ParamKind::Linear, Tensor::new(vec![1], vec![v]).unwrap());
    s
}

#[test]
fn adam_step_size_tends_to_lr_under_constant_gradient() {
    // scalar simulation oracle: with g constant, m̂ = g and v̂ = g² exactly,
    // so each step moves lr·|g|/(|g| + eps)
    let mut p = scalar_set(0.0);
    let mut state = AdamState::zeros_like(&p);
    let hyper = AdamHyper { beta1: 0.9, beta2: 0.99, eps: 1e-6 };
    let lr = 1e-3;
    let mut last = 0.0f64;
    for t in 1..=1000 {
        let before = p.get(0).value.data()[0] as f64;
        adamw_step(&mut p, &[vec![0.5f32]], &mut state, hyper, t, lr, 0.0).unwrap();
        last = (p.get(0).value.data()[0] as f64 - before).abs();
    }
    assert!((last - lr).abs() / lr < 0.01, "final step {last}");
}

#[test]
fn ema_identity_and_convex_hull_at_32_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mk = |rng: &mut ChaCha8Rng| {
        let mut s = ParamSet::new();
        s.push("a", ParamKind::Linear, Tensor::<f32>::randn([64, 32], 1.0, rng));
        s.push("b", ParamKind::Norm, Tensor::<f32>::randn([32], 1.0, rng));
        s
    };
    let mut ema = mk(&mut rng);
    let student = mk(&mut rng);
    let old = ema.clone();
    let m = 0.998;
    ema_update(&mut ema, &student, m);
    for ((e, o), s) in ema.iter().zip(old.iter()).zip(student.iter()) {
        for ((&e, &o), &s) in e.value.data().iter().zip(o.value.data()).zip(s.value.data()) {
            let exact = m * o as f64 + (1.0 - m) * s as f64;
            // one binary32 rounding of the exact value
            assert!((e as f64 - exact).abs() <= 1e-7 * exact.abs().max(1.0));
            assert!(e >= o.min(s) && e <= o.max(s));
        }
    }
}

#[test]
fn same_seed_and_batch_give_the_same_loss() {
    let recs = corpus(8, 2);
    let batch = crops(&recs, 3);
    let losses: Vec<f64> = (0..2)
        .map(|_| {
            let mut t = Trainer::<f32>::new(&tiny_model(), &small_config(10), Exec::Parallel).unwrap();
            t.jepa_step(&batch, false).unwrap().loss
        })
        .collect();
    assert_eq!(losses[0], losses[1]);
}

#[test]
fn batch_order_does_not_change_the_loss() {
    let recs = corpus(8, 4);
    let batch = crops(&recs, 5);
    let trainer = Trainer::<f64>::new(&tiny_model(), &small_config(10), Exec::Sequential).unwrap();
    let spec = sample_mask(40, 4, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let loss = trainer.loss_with_mask(&batch, &spec).unwrap();
    let order = [2, 0, 3, 1];
    let permuted: Vec<EcgRecord> = order.iter().map(|&i| batch[i].clone()).collect();
    let spec2 = ecg_jepa::masking::MaskSpec::from_masked(40, order.iter().map(|&i| spec.masked[i].clone()).collect())
        .unwrap();
    let loss2 = trainer.loss_with_mask(&permuted, &spec2).unwrap();
    assert!((loss - loss2).abs() < 1e-12, "{loss} vs {loss2}");
}

#[test]
fn constant_zero_predictor_loss_is_mean_absolute_target() {
    let recs = corpus(8, 7);
    let batch = crops(&recs, 8);
    let mut trainer = Trainer::<f64>::new(&tiny_model(), &small_config(10), Exec::Sequential).unwrap();
    for p in trainer.params.predictor.iter_mut() {
        if p.name == "predictor.norm.scale" {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let spec = sample_mask(40, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let signals = ecg_jepa::trainer::signals_tensor::<f64>(&batch).unwrap();
    let targets = trainer.teacher_targets(&signals, &spec).unwrap();
    let expected = targets.data().iter().map(|v| v.abs()).sum::<f64>() / targets.len() as f64;
    let loss = trainer.loss_with_mask(&batch, &spec).unwrap();
    assert!((loss - expected).abs() < 1e-12);
}

#[test]
fn student_changes_do_not_move_teacher_targets() {
    let recs = corpus(8, 10);
    let batch = crops(&recs, 11);
    let mut trainer = Trainer::<f64>::new(&tiny_model(), &small_config(10), Exec::Sequential).unwrap();
    let spec = sample_mask(40, 4, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    let signals = ecg_jepa::trainer::signals_tensor::<f64>(&batch).unwrap();
    let before = trainer.teacher_targets(&signals, &spec).unwrap();
    for p in trainer.params.encoder.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v *= 1.5);
    }
    assert_eq!(trainer.teacher_targets(&signals, &spec).unwrap().data(), before.data());
}

#[test]
fn zero_steps_keep_the_initial_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let mut trainer = Trainer::<f32>::new(&tiny_model(), &small_config(0), Exec::Parallel).unwrap();
    let initial = trainer.params.encoder.clone();
    let summary = pretrain(&mut trainer, &sampler(corpus(4, 13)), dir.path(), &[]).unwrap();
    assert_eq!(summary.steps, 0);
    for (e, s) in trainer.ema.params().iter().zip(initial.iter()) {
        assert_eq!(e.value.data(), s.value.data());
    }
}

#[test]
fn metrics_log_records_the_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        warmup_steps: 4,
        ..small_config(12)
    };
    let mut trainer = Trainer::<f32>::new(&tiny_model(), &cfg, Exec::Parallel).unwrap();
    pretrain(&mut trainer, &sampler(corpus(8, 14)), dir.path(), &[]).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    let rows = MetricsRow::read_all(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), (0..12).collect::<Vec<_>>());
    for r in &rows {
        assert_eq!(r.lr, cfg.lr_at(r.step));
        assert_eq!(r.wd, cfg.wd_at(r.step));
        assert_eq!(r.momentum, cfg.ema_momentum_at(r.step));
        assert!(r.loss.is_finite() && r.mean_std.unwrap() > 0.0 && r.eff_rank.unwrap() >= 1.0);
    }
    assert_eq!(rows[2].lr, 0.5e-3);
}

#[test]
fn sequential_and_parallel_training_agree() {
    let recs = corpus(8, 15);
    let run = |exec| {
        let mut t = Trainer::<f32>::new(&tiny_model(), &small_config(5), exec).unwrap();
        let losses: Vec<f64> = (0..5).map(|i| t.jepa_step(&crops(&recs, 16 + i), false).unwrap().loss).collect();
        (losses, t.params.encoder)
    };
    let (la, pa) = run(Exec::Sequential);
    let (lb, pb) = run(Exec::Parallel);
    assert_eq!(la, lb);
    for (a, b) in pa.iter().zip(pb.iter()) {
        assert_eq!(a.value.data(), b.value.data());
    }
}

#[test]
fn resume_continues_the_step_counter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoint_every: 4,
        ..small_config(8)
    };
    let data = sampler(corpus(8, 17));
    let mut trainer = Trainer::<f32>::new(&tiny_model(), &cfg, Exec::Parallel).unwrap();
    let summary = pretrain(&mut trainer, &data, dir.path(), &[]).unwrap();
    assert_eq!(summary.checkpoints.len(), 2);
    let ck = Checkpoint::<f32>::load(&summary.checkpoints[0]).unwrap();
    assert_eq!(ck.step, 4);
    let longer = TrainConfig {
        total_steps: 10,
        ..cfg
    };
    let mut resumed = Trainer::resume(&ck, &longer, Exec::Parallel).unwrap();
    assert_eq!(resumed.step, 4);
    let out = tempfile::tempdir().unwrap();
    let s = pretrain(&mut resumed, &data, out.path(), &[]).unwrap();
    assert_eq!((resumed.step, s.steps), (10, 10));
    let rows = MetricsRow::read_all(&out.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.first().map(|r| r.step), Some(4));
}
