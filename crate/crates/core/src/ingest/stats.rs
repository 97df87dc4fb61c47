use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DatabaseId, EcgRecord};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// One global mean/std per database, pooled over every lead and record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatabaseStats {
    entries: BTreeMap<DatabaseId, NormStats>,
}

impl DatabaseStats {
    pub fn compute<'a>(records: impl IntoIterator<Item = &'a EcgRecord>) -> Self {
        let mut acc: BTreeMap<DatabaseId, (f64, f64, u64)> = BTreeMap::new();
        for rec in records {
            let e = acc.entry(rec.database).or_default();
            for &x in &rec.samples {
                let x = x as f64;
                e.0 += x;
                e.1 += x * x;
                e.2 += 1;
            }
        }
        let entries = acc
            .into_iter()
            .filter(|(_, (_, _, n))| *n > 0)
            .map(|(db, (s, ss, n))| {
                let n = n as f64;
                let mean = s / n;
                let var = (ss / n - mean * mean).max(0.0);
                let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                (db, NormStats { mean, std })
            })
            .collect();
        Self { entries }
    }

    pub fn get(&self, db: DatabaseId) -> Option<NormStats> {
        self.entries.get(&db).copied()
    }

    pub fn insert(&mut self, db: DatabaseId, stats: NormStats) {
        self.entries.insert(db, stats);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DatabaseId, NormStats)> + '_ {
        self.entries.iter().map(|(&d, &s)| (d, s))
    }

    /// `database_id mean std` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (db, s) in self.iter() {
            writeln!(out, "{db} {:?} {:?}", s.mean, s.std).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut stats = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [db, mean, std] = f[..] else {
                return Err(format!("line {}: expected `database_id mean std`", no + 1));
            };
            let db: DatabaseId = db.parse().map_err(|e: Error| e.to_string())?;
            let mean: f64 = mean.parse().map_err(|_| format!("line {}: bad mean", no + 1))?;
            let std: f64 = std.parse().map_err(|_| format!("line {}: bad std", no + 1))?;
            if !(std > 0.0) {
                return Err(format!("line {}: std must be positive", no + 1));
            }
            stats.insert(db, NormStats { mean, std });
        }
        Ok(stats)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|m| Error::format(path, m))
    }
}
