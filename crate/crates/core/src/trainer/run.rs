use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::step::{StepReport, Trainer};
use crate::ingest::{random_crop, EcgRecord, MixtureSampler};
use crate::tensor::Real;
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "step,loss,lr,wd,momentum,mean_std,eff_rank";

/// One parsed line of the metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wd: f64,
    pub momentum: f64,
    pub mean_std: Option<f64>,
    pub eff_rank: Option<f64>,
}

impl MetricsRow {
    fn from_report(r: &StepReport) -> Self {
        Self {
            step: r.step,
            loss: r.loss,
            lr: r.lr,
            wd: r.wd,
            momentum: r.momentum,
            mean_std: r.collapse.map(|c| c.mean_std),
            eff_rank: r.collapse.map(|c| c.eff_rank),
        }
    }

    fn to_line(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.loss,
            self.lr,
            self.wd,
            self.momentum,
            opt(self.mean_std),
            opt(self.eff_rank)
        )
    }

    fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return None;
        }
        let opt = |s: &str| if s.is_empty() { Some(None) } else { s.parse().ok().map(Some) };
        Some(Self {
            step: f[0].parse().ok()?,
            loss: f[1].parse().ok()?,
            lr: f[2].parse().ok()?,
            wd: f[3].parse().ok()?,
            momentum: f[4].parse().ok()?,
            mean_std: opt(f[5])?,
            eff_rank: opt(f[6])?,
        })
    }

    /// Reads every row of a metrics file.
    pub fn read_all(path: &Path) -> Result<Vec<Self>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err(Error::format(path, "unexpected metrics header"));
        }
        lines
            .map(|l| Self::parse(l).ok_or_else(|| Error::format(path, format!("bad metrics row {l:?}"))))
            .collect()
    }
}

/// Where a pre-training run left its artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainSummary {
    pub steps: u64,
    pub metrics: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub last_loss: Option<f64>,
}

fn checkpoint_dir(out: &Path, step: u64) -> PathBuf {
    out.join("checkpoints").join(format!("step-{step:08}"))
}

/// Opens the metrics log, dropping rows at or past `from_step` so a resumed
/// run rewrites them.
fn open_metrics(path: &Path, from_step: u64) -> Result<fs::File> {
    let mut kept = format!("{METRICS_HEADER}\n");
    if from_step > 0 && path.exists() {
        for row in MetricsRow::read_all(path)?.into_iter().filter(|r| r.step < from_step) {
            kept.push_str(&row.to_line());
            kept.push('\n');
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))?;
    fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))
}

/// Runs `trainer` until `total_steps`, sampling batches from the mixture,
/// logging every `log_every` steps (and the last one) and checkpointing every
/// `checkpoint_every` steps plus once at the end.
pub fn pretrain<T: Real>(
    trainer: &mut Trainer<T>,
    corpus: &MixtureSampler<EcgRecord>,
    out_dir: &Path,
    meta: &[(String, String)],
) -> Result<PretrainSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics = out_dir.join("metrics.csv");
    let mut log = open_metrics(&metrics, trainer.step)?;
    let cfg = trainer.config.clone();
    let mut checkpoints = Vec::new();
    let mut last_loss = None;

    while trainer.step < cfg.total_steps {
        let raw = corpus.sample_batch(cfg.batch_size, &mut trainer.rng);
        let mut batch = Vec::with_capacity(raw.len());
        for rec in &raw {
            let len = cfg.crop_samples(rec.sampling_rate);
            let crop = random_crop(rec, len, &mut trainer.rng).ok_or_else(|| {
                Error::Config(format!("record {} is shorter than the {len}-sample crop", rec.record_id))
            })?;
            batch.push(crop);
        }
        let step = trainer.step;
        let log_now = cfg.log_every > 0 && step % cfg.log_every == 0 || step + 1 == cfg.total_steps;
        let report = trainer.jepa_step(&batch, log_now)?;
        last_loss = Some(report.loss);
        if log_now {
            writeln!(log, "{}", MetricsRow::from_report(&report).to_line()).map_err(|e| Error::io(&metrics, e))?;
            log::info!("step {step} loss {:.5} lr {:.3e}", report.loss, report.lr);
        }
        if cfg.checkpoint_every > 0 && trainer.step % cfg.checkpoint_every == 0 && trainer.step < cfg.total_steps {
            let dir = checkpoint_dir(out_dir, trainer.step);
            trainer.checkpoint(meta.to_vec()).save(&dir)?;
            checkpoints.push(dir);
        }
    }
    log.flush().map_err(|e| Error::io(&metrics, e))?;
    let final_checkpoint = checkpoint_dir(out_dir, trainer.step);
    trainer.checkpoint(meta.to_vec()).save(&final_checkpoint)?;
    checkpoints.push(final_checkpoint.clone());
    Ok(PretrainSummary {
        steps: trainer.step,
        metrics,
        checkpoints,
        final_checkpoint,
        last_loss,
    })
}
