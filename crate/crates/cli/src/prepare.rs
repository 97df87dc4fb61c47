use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use ecg_jepa::ingest::{
    prepare_corpus, read_manifest, read_record, synth_ecg, write_manifest, write_record, DatabaseStats, EcgRecord,
    ManifestEntry, PreprocessOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::usage;

#[derive(Args)]
pub struct PrepareArgs {
    /// Manifest of raw records to preprocess.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    manifest: Option<PathBuf>,
    /// Output directory for records/, manifest.txt and the statistics.
    #[arg(long)]
    out: PathBuf,
    /// Statistics output path [default: <out>/stats.txt].
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Normalize with existing statistics instead of computing them.
    #[arg(long)]
    apply_stats: Option<PathBuf>,
    /// Generate this many synthetic records instead of reading a manifest.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Length of each synthetic record in seconds.
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    /// Number of synthetic classes; records get one-hot labels.
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

/// Synthetic records cycle through the classes; each consecutive block of
/// `classes` records shares one fold, so every fold sees every class.
fn synthetic(n: usize, seconds: f64, classes: usize, seed: u64) -> (Vec<EcgRecord>, HashMap<String, u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = HashMap::new();
    let records = (0..n)
        .map(|i| {
            let class = i % classes;
            let mut labels = vec![0u8; classes];
            labels[class] = 1;
            let mut rec = synth_ecg(&mut rng, seconds, 12, Some(class)).with_labels(labels);
            rec.record_id = format!("synth-{i:06}");
            folds.insert(rec.record_id.clone(), ((i / classes) % 10 + 1) as u8);
            rec
        })
        .collect();
    (records, folds)
}

pub fn run(args: PrepareArgs) -> anyhow::Result<()> {
    let (raw, folds) = match (&args.manifest, args.synthetic) {
        (_, Some(n)) => {
            if args.classes == 0 || !(args.seconds > 0.0) {
                return Err(usage("--classes and --seconds must be positive"));
            }
            synthetic(n, args.seconds, args.classes, args.seed)
        }
        (Some(path), None) => {
            let mut folds = HashMap::new();
            let mut records = Vec::new();
            for e in read_manifest(path)? {
                let rec = read_record(&e.path)?;
                if rec.database != e.database {
                    bail!("{}: manifest says {}, sidecar says {}", e.path.display(), e.database, rec.database);
                }
                if let Some(f) = e.fold {
                    folds.insert(rec.record_id.clone(), f);
                }
                records.push(rec);
            }
            (records, folds)
        }
        (None, None) => return Err(usage("either --manifest or --synthetic is required")),
    };

    let opts = PreprocessOptions {
        stats: match &args.apply_stats {
            Some(p) => Some(DatabaseStats::read(p)?),
            None => None,
        },
        exec: crate::exec_mode(args.sequential),
        ..PreprocessOptions::default()
    };
    let total = raw.len();
    let (records, stats, report) = prepare_corpus(raw, &opts, args.seed);
    for (id, why) in &report.rejected {
        log::warn!("rejected {id}: {why}");
    }
    println!("kept {} of {total} records, rejected {}", report.kept, report.rejected.len());
    if records.is_empty() {
        bail!("no record survived preprocessing");
    }

    let dir = args.out.join("records");
    let mut entries = Vec::with_capacity(records.len());
    for rec in &records {
        let path = write_record(&dir, rec)?;
        entries.push(ManifestEntry {
            path,
            database: rec.database,
            fold: folds.get(&rec.record_id).copied(),
        });
    }
    let manifest = args.out.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    let stats_path = args.stats.unwrap_or_else(|| args.out.join("stats.txt"));
    stats
        .write(&stats_path)
        .with_context(|| format!("writing {}", stats_path.display()))?;
    println!("wrote {} and {}", manifest.display(), stats_path.display());
    Ok(())
}
