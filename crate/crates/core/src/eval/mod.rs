//! Downstream evaluation: linear probing, fine-tuning and two-stage
//! fine-tuning with crop-averaged inference and macro AUC.

mod auc;
mod config;
mod crops;
mod dataset;
mod head;
mod protocol;

pub use auc::{binary_auc, macro_auc};
pub use config::{EvalConfig, EvalMode, Pooling};
pub use crops::{eval_crops, train_crop};
pub use dataset::LabeledDataset;
pub use head::ClassifierHead;
pub use protocol::{
    evaluate_test, predict_record, predict_records, run_seeds, train_head, Backbone, EvalSummary, FittedHead,
    SeedResult, SeedRun,
};
