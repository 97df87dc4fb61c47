use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use ecg_jepa::ingest::{write_record, DatabaseId, EcgRecord};

use crate::usage;

#[derive(Args)]
pub struct ImportArgs {
    /// CSV file with a header row and one column per lead.
    #[arg(long)]
    input: PathBuf,
    /// Sampling rate in Hz.
    #[arg(long)]
    rate: f64,
    /// Source database id, e.g. ptb-xl.
    #[arg(long, default_value = "synthetic")]
    database: String,
    /// Directory that receives the record and its sidecar.
    #[arg(long)]
    out: PathBuf,
    /// Record id [default: file stem of --input].
    #[arg(long)]
    id: Option<String>,
    /// Comma-separated multi-hot label vector.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<u8>>,
}

/// Empty cells and `nan` become NaN so preprocessing can interpolate them.
fn cell(s: &str) -> Option<f32> {
    let s = s.trim();
    if s.is_empty() {
        Some(f32::NAN)
    } else {
        s.parse().ok()
    }
}

pub fn run(args: ImportArgs) -> anyhow::Result<()> {
    if !(args.rate > 0.0) {
        return Err(usage("--rate must be positive"));
    }
    let database: DatabaseId = args
        .database
        .parse()
        .map_err(|_| usage(format!("unknown database {:?}", args.database)))?;
    let id = match args.id {
        Some(id) => id,
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| usage("cannot derive a record id from --input"))?,
    };

    let mut reader = csv::Reader::from_path(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let leads = reader.headers()?.len();
    let mut columns: Vec<Vec<f32>> = vec![Vec::new(); leads];
    for (row, result) in reader.records().enumerate() {
        let rec = result?;
        if rec.len() != leads {
            bail!("row {}: {} fields, header has {leads}", row + 2, rec.len());
        }
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            col.push(cell(field).with_context(|| format!("row {}: bad number {field:?}", row + 2))?);
        }
    }
    let mut rec = EcgRecord::new(columns.concat(), leads, args.rate, database, id)?;
    if let Some(l) = args.labels {
        rec = rec.with_labels(l);
    }
    let path = write_record(&args.out, &rec)?;
    println!("{}", path.display());
    Ok(())
}
