//! Record ingestion: canonical on-disk format, preprocessing, per-database
//! statistics, the weighted multi-database sampler and a synthetic ECG
//! generator for runs without real corpora.

mod manifest;
mod preprocess;
mod record;
mod sampler;
mod stats;
mod synth;

pub use manifest::{read_manifest, write_manifest, Fold, ManifestEntry};
pub use preprocess::{
    crop_10s, interpolate_nans, moving_median, normalize_and_clip, prepare_corpus, random_crop,
    remove_baseline_wander, resample, resample_500hz, PrepareReport, PreprocessOptions, CLIP_SIGMA,
    RECORD_SECONDS, TARGET_RATE,
};
pub use record::{read_record, write_record, DatabaseId, EcgRecord, RecordMeta};
pub use sampler::MixtureSampler;
pub use stats::{DatabaseStats, NormStats};
pub use synth::{synth_ecg, synth_ecg_with, SynthOptions};
