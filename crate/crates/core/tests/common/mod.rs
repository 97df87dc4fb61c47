//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod grads;

use std::collections::BTreeMap;

use ecg_jepa::eval::LabeledDataset;
use ecg_jepa::ingest::{prepare_corpus, synth_ecg_with, DatabaseId, EcgRecord, MixtureSampler, PreprocessOptions, SynthOptions};
use ecg_jepa::model::ModelConfig;
use ecg_jepa::tensor::Tensor;
use ecg_jepa::trainer::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_model() -> ModelConfig {
    ModelConfig::tiny(32, 2, 2)
}

/// 300 steps over 2 s crops (40 patches).
pub fn smoke_config() -> TrainConfig {
    TrainConfig {
        total_steps: 300,
        batch_size: 16,
        warmup_steps: 30,
        crop_seconds: 2.0,
        checkpoint_every: 100,
        log_every: 10,
        seed: 7,
        ..TrainConfig::default()
    }
}

/// Normalized 10 s unlabeled records of random classes.
pub fn corpus(n: usize, seed: u64) -> Vec<EcgRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SynthOptions::default();
    let raw: Vec<EcgRecord> = (0..n)
        .map(|_| {
            let class = rng.random_range(0..8);
            synth_ecg_with(&opts, &mut rng, 10.0, 12, Some(class))
        })
        .collect();
    let (records, _, report) = prepare_corpus(raw, &PreprocessOptions::default(), seed);
    assert!(report.rejected.is_empty());
    records
}

pub fn sampler(records: Vec<EcgRecord>) -> MixtureSampler<EcgRecord> {
    let mut by_db: BTreeMap<DatabaseId, Vec<EcgRecord>> = BTreeMap::new();
    for r in records {
        by_db.entry(r.database).or_default().push(r);
    }
    MixtureSampler::with_corpus_weights(by_db).unwrap()
}

/// Two-class dataset (class 1 has a flattened T wave) with one-hot labels.
/// The first `n_fit` records cycle through folds 1..=9 (fold 9 validates),
/// the remaining `n_test` form the test fold.
pub fn two_class(n_fit: usize, n_test: usize, seconds: f64, effect: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SynthOptions {
        class_effect: effect,
        ..SynthOptions::default()
    };
    let n = n_fit + n_test;
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let labels = if class == 1 { vec![0, 1] } else { vec![1, 0] };
        raw.push(synth_ecg_with(&opts, &mut rng, seconds, 12, Some(class)).with_labels(labels));
    }
    let stats = ecg_jepa::ingest::DatabaseStats::compute(raw.iter());
    let records: Vec<EcgRecord> = raw
        .into_iter()
        .map(|r| ecg_jepa::ingest::normalize_and_clip(r, &stats).unwrap())
        .collect();
    let folds = (0..n)
        .map(|i| if i < n_fit { ((i / 2) % 9 + 1) as u8 } else { 10 })
        .collect();
    LabeledDataset::new(records, folds).unwrap()
}

pub fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape.to_vec(), 1.0, &mut rng)
}
