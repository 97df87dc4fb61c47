use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::DatabaseId;
use crate::{Error, Result};

/// Downstream split; folds 1-8 train, 9 validates, 10 tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fold {
    Train,
    Val,
    Test,
}

impl Fold {
    pub fn from_number(fold: u8) -> Fold {
        match fold {
            9 => Fold::Val,
            10 => Fold::Test,
            _ => Fold::Train,
        }
    }
}

/// One manifest line: `<path> <database_id> [fold]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub database: DatabaseId,
    pub fold: Option<u8>,
}

/// Reads a whitespace-separated manifest. Relative paths resolve against the
/// manifest's directory; blank lines and `#` comments are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::format(path, format!("line {}: {msg}", no + 1));
        if !(2..=3).contains(&fields.len()) {
            return Err(bad("expected `<path> <database_id> [fold]`"));
        }
        let rel = PathBuf::from(fields[0]);
        let database = fields[1].parse().map_err(|_| bad("unknown database id"))?;
        let fold = match fields.get(2) {
            Some(f) => Some(f.parse::<u8>().map_err(|_| bad("fold must be an integer 1-10"))?),
            None => None,
        };
        entries.push(ManifestEntry {
            path: if rel.is_absolute() { rel } else { base.join(rel) },
            database,
            fold,
        });
    }
    Ok(entries)
}

/// Writes entries with paths relative to the manifest directory when possible.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = String::from("# path database_id [fold]\n");
    for e in entries {
        let shown = e.path.strip_prefix(base).unwrap_or(&e.path);
        write!(out, "{} {}", shown.display(), e.database).unwrap();
        if let Some(f) = e.fold {
            write!(out, " {f}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
