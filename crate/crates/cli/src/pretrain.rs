use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::bail;
use clap::Args;
use ecg_jepa::config::{Precision, RunConfig};
use ecg_jepa::ingest::{read_manifest, read_record, DatabaseId, EcgRecord, MixtureSampler};
use ecg_jepa::model::Checkpoint;
use ecg_jepa::tensor::Real;
use ecg_jepa::trainer::{pretrain, Trainer};

use crate::resolve::{echo, resolve};
use crate::usage;

#[derive(Args)]
pub struct PretrainArgs {
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest of prepared records; overrides `run.manifest`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Extra `KEY=VALUE` assignments applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

fn path_flag(key: &'static str, p: &Option<PathBuf>) -> Option<(&'static str, String)> {
    p.as_ref().map(|p| (key, p.display().to_string()))
}

pub fn run(args: PretrainArgs) -> anyhow::Result<()> {
    let first: Vec<(&str, String)> = [path_flag("run.manifest", &args.manifest), path_flag("run.out_dir", &args.out)]
        .into_iter()
        .flatten()
        .collect();
    let mut cfg = resolve(&first, args.config.as_deref(), &args.overrides)?;
    if args.sequential {
        cfg.run.sequential = true;
    }
    if cfg.run.manifest.is_empty() {
        return Err(usage("no manifest given (use --manifest or run.manifest)"));
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    match cfg.run.precision {
        Precision::F32 => train::<f32>(cfg, args.resume.as_deref()),
        Precision::F64 => train::<f64>(cfg, args.resume.as_deref()),
    }
}

fn load_corpus(manifest: &Path) -> anyhow::Result<MixtureSampler<EcgRecord>> {
    let mut by_db: BTreeMap<DatabaseId, Vec<EcgRecord>> = BTreeMap::new();
    for e in read_manifest(manifest)? {
        let rec = read_record(&e.path)?;
        by_db.entry(rec.database).or_default().push(rec);
    }
    if by_db.is_empty() {
        bail!("{} lists no records", manifest.display());
    }
    let sampler = MixtureSampler::with_corpus_weights(by_db)?;
    for (db, w) in sampler.databases().iter().zip(sampler.weights()) {
        log::info!("database {db}: weight {w:.4}");
    }
    Ok(sampler)
}

fn train<T: Real>(mut cfg: RunConfig, resume: Option<&Path>) -> anyhow::Result<()> {
    let exec = crate::exec_mode(cfg.run.sequential);
    let corpus = load_corpus(Path::new(&cfg.run.manifest))?;
    let mut trainer = match resume {
        Some(dir) => {
            let t = Trainer::<T>::resume(&Checkpoint::load(dir)?, &cfg.train, exec)?;
            log::info!("resuming at step {}", t.step);
            cfg.model = t.model.config.clone();
            t
        }
        None => Trainer::<T>::new(&cfg.model, &cfg.train, exec)?,
    };
    let out = PathBuf::from(&cfg.run.out_dir);
    echo(&cfg, &out)?;
    let meta: Vec<(String, String)> = cfg
        .entries()
        .into_iter()
        .filter(|(k, _)| k.starts_with("train.") || k == "run.seed" || k == "run.precision")
        .collect();
    let summary = pretrain(&mut trainer, &corpus, &out, &meta)?;
    println!(
        "trained to step {} (last loss {}); final checkpoint {}",
        summary.steps,
        summary.last_loss.map_or("n/a".into(), |l| format!("{l:.5}")),
        summary.final_checkpoint.display()
    );
    Ok(())
}
