//! Self-supervised pre-training: masked latent prediction against an EMA
//! teacher, AdamW with cosine schedules, collapse diagnostics and resumable
//! checkpoints.

mod metrics;
mod optim;
mod run;
mod schedule;
mod step;

pub use metrics::{collapse_metrics, CollapseMetrics};
pub use optim::{adamw_step, check_finite, ema_update, AdamHyper, AdamState};
pub use run::{pretrain, MetricsRow, PretrainSummary, METRICS_HEADER};
pub use schedule::TrainConfig;
pub use step::{signals_tensor, StepReport, Trainer};
