use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use ecg_jepa::config::{Precision, RunConfig};
use ecg_jepa::eval::{run_seeds, Backbone, EvalMode, FittedHead, LabeledDataset, SeedRun};
use ecg_jepa::model::Checkpoint;
use ecg_jepa::tensor::Real;

use crate::resolve::{echo, resolve};
use crate::usage;

#[derive(Args)]
pub struct EvalArgs {
    /// linear, finetune or two_stage; resets the eval section to that mode's defaults.
    #[arg(long)]
    mode: Option<String>,
    /// Pre-training checkpoint directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest of labelled records with folds (9 validation, 10 test).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of seeds, counted up from `run.seed`.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Output directory of an earlier linear run; required for two_stage.
    #[arg(long)]
    linear: Option<PathBuf>,
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `KEY=VALUE` assignments applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

fn head_dir(root: &Path, seed: u64) -> PathBuf {
    root.join("heads").join(format!("seed-{seed}"))
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let mut first = vec![("run.out_dir", args.out.display().to_string())];
    if let Some(m) = &args.mode {
        first.insert(0, ("eval.mode", m.clone()));
    }
    let mut cfg = resolve(&first, args.config.as_deref(), &args.overrides)?;
    if args.sequential {
        cfg.run.sequential = true;
    }
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    cfg.eval.validate().map_err(|e| usage(e.to_string()))?;
    match cfg.run.precision {
        Precision::F32 => evaluate::<f32>(cfg, &args),
        Precision::F64 => evaluate::<f64>(cfg, &args),
    }
}

fn evaluate<T: Real>(mut cfg: RunConfig, args: &EvalArgs) -> anyhow::Result<()> {
    let exec = crate::exec_mode(cfg.run.sequential);
    let seeds: Vec<u64> = (0..args.seeds).map(|i| cfg.run.seed + i).collect();
    let priors = match (cfg.eval.mode, &args.linear) {
        (EvalMode::TwoStage, None) => return Err(ecg_jepa::Error::MissingLinearArtifact.into()),
        (EvalMode::TwoStage, Some(dir)) => Some(
            seeds
                .iter()
                .map(|&s| {
                    let d = head_dir(dir, s);
                    let ck = Checkpoint::<T>::load(&d).with_context(|| format!("linear artifact for seed {s}"))?;
                    Ok(FittedHead::from_checkpoint(&ck)?)
                })
                .collect::<anyhow::Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    let ck = Checkpoint::<T>::load(&args.checkpoint)?;
    let backbone = Backbone::from_checkpoint(&ck, cfg.eval.use_ema)?;
    cfg.model = backbone.model.config.clone();
    let data = LabeledDataset::from_manifest(&args.data)?;
    echo(&cfg, &args.out)?;

    let (summary, runs) = run_seeds(&backbone, &data, &cfg.eval, &seeds, priors.as_deref(), exec)?;
    for r in &runs {
        write_artifacts(&args.out, &backbone, r, data.classes())?;
    }
    let results = args.out.join("results.json");
    std::fs::write(&results, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", results.display()))?;
    println!(
        "{} macro AUC {:.3} ({:.3}) over {} seeds; results in {}",
        summary.mode,
        summary.mean,
        summary.std,
        seeds.len(),
        results.display()
    );
    Ok(())
}

fn write_artifacts<T: Real>(out: &Path, backbone: &Backbone<T>, run: &SeedRun<T>, classes: usize) -> anyhow::Result<()> {
    let seed = run.result.seed;
    run.fitted.to_checkpoint(&backbone.model.config).save(&head_dir(out, seed))?;
    let dir = out.join("predictions");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("seed-{seed}.csv"));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["record_id".to_string()];
    header.extend((0..classes).map(|c| format!("class_{c}")));
    w.write_record(&header)?;
    for (id, probs) in &run.predictions {
        let mut row = vec![id.clone()];
        row.extend(probs.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
