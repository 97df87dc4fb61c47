use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Source database of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DatabaseId {
    MimicIvEcg,
    Code15,
    PtbXl,
    ChapmanShaoxing,
    Cpsc,
    CpscExtra,
    Georgia,
    Ningbo,
    Ptb,
    StPetersburg,
    Synthetic,
}

impl DatabaseId {
    pub const ALL: [DatabaseId; 11] = [
        DatabaseId::MimicIvEcg,
        DatabaseId::Code15,
        DatabaseId::PtbXl,
        DatabaseId::ChapmanShaoxing,
        DatabaseId::Cpsc,
        DatabaseId::CpscExtra,
        DatabaseId::Georgia,
        DatabaseId::Ningbo,
        DatabaseId::Ptb,
        DatabaseId::StPetersburg,
        DatabaseId::Synthetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatabaseId::MimicIvEcg => "mimic-iv-ecg",
            DatabaseId::Code15 => "code-15",
            DatabaseId::PtbXl => "ptb-xl",
            DatabaseId::ChapmanShaoxing => "chapman-shaoxing",
            DatabaseId::Cpsc => "cpsc",
            DatabaseId::CpscExtra => "cpsc-extra",
            DatabaseId::Georgia => "georgia",
            DatabaseId::Ningbo => "ningbo",
            DatabaseId::Ptb => "ptb",
            DatabaseId::StPetersburg => "st-petersburg",
            DatabaseId::Synthetic => "synthetic",
        }
    }

    /// Pre-training mixture weight of the public corpora; `None` for synthetic data.
    pub fn mixture_weight(self) -> Option<f64> {
        Some(match self {
            DatabaseId::MimicIvEcg => 0.7,
            DatabaseId::Code15 => 0.1,
            DatabaseId::PtbXl => 0.05,
            DatabaseId::ChapmanShaoxing => 0.01875,
            DatabaseId::Cpsc => 0.025,
            DatabaseId::CpscExtra => 0.0125,
            DatabaseId::Georgia => 0.0375,
            DatabaseId::Ningbo => 0.028125,
            DatabaseId::Ptb => 0.009375,
            DatabaseId::StPetersburg => 0.009375,
            DatabaseId::Synthetic => return None,
        })
    }

    /// Databases whose recordings get baseline-wander removal by default.
    pub fn needs_baseline_removal(self) -> bool {
        matches!(self, DatabaseId::Code15 | DatabaseId::StPetersburg)
    }
}

impl fmt::Display for DatabaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatabaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        DatabaseId::ALL
            .into_iter()
            .find(|d| d.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown database id {s:?}")))
    }
}

impl From<DatabaseId> for String {
    fn from(d: DatabaseId) -> String {
        d.name().to_string()
    }
}

impl TryFrom<String> for DatabaseId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A multi-lead waveform, stored lead-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub samples: Vec<f32>,
    pub leads: usize,
    pub sampling_rate: f64,
    pub database: DatabaseId,
    pub record_id: String,
    /// Multi-hot class labels; only downstream datasets carry them.
    pub labels: Option<Vec<u8>>,
}

impl EcgRecord {
    pub fn new(
        samples: Vec<f32>,
        leads: usize,
        sampling_rate: f64,
        database: DatabaseId,
        record_id: impl Into<String>,
    ) -> Result<Self> {
        if leads == 0 || samples.len() % leads != 0 {
            return Err(Error::shape("EcgRecord", format!("multiple of {leads} samples"), samples.len()));
        }
        if !(sampling_rate > 0.0) {
            return Err(Error::Config(format!("sampling rate must be positive, got {sampling_rate}")));
        }
        Ok(Self {
            samples,
            leads,
            sampling_rate,
            database,
            record_id: record_id.into(),
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.samples.len() / self.leads
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.len() as f64 / self.sampling_rate
    }

    pub fn lead(&self, i: usize) -> &[f32] {
        let n = self.len();
        &self.samples[i * n..(i + 1) * n]
    }

    pub fn lead_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.len();
        &mut self.samples[i * n..(i + 1) * n]
    }

    /// Copy of the window `[offset, offset + len)` of every lead.
    pub fn window(&self, offset: usize, len: usize) -> EcgRecord {
        let mut samples = Vec::with_capacity(self.leads * len);
        for l in 0..self.leads {
            samples.extend_from_slice(&self.lead(l)[offset..offset + len]);
        }
        EcgRecord {
            samples,
            ..self.meta_clone()
        }
    }

    /// Same metadata, no samples.
    pub(crate) fn meta_clone(&self) -> EcgRecord {
        EcgRecord {
            samples: Vec::new(),
            leads: self.leads,
            sampling_rate: self.sampling_rate,
            database: self.database,
            record_id: self.record_id.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// JSON sidecar describing a `.ecg` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub leads: usize,
    pub sampling_rate: f64,
    pub database_id: DatabaseId,
    pub record_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
}

fn sidecar_path(ecg: &Path) -> PathBuf {
    ecg.with_extension("json")
}

/// Writes `<dir>/<record_id>.ecg` (little-endian binary32, lead-major) and its
/// JSON sidecar. Returns the `.ecg` path.
pub fn write_record(dir: &Path, rec: &EcgRecord) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.ecg", rec.record_id));
    let mut bytes = Vec::with_capacity(rec.samples.len() * 4);
    for &x in &rec.samples {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    let meta = RecordMeta {
        leads: rec.leads,
        sampling_rate: rec.sampling_rate,
        database_id: rec.database,
        record_id: rec.record_id.clone(),
        labels: rec.labels.clone(),
    };
    let side = sidecar_path(&path);
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(path)
}

pub fn read_record(path: &Path) -> Result<EcgRecord> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RecordMeta = serde_json::from_str(&text).map_err(|e| Error::format(&side, e))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 || meta.leads == 0 || (bytes.len() / 4) % meta.leads != 0 {
        return Err(Error::format(path, format!("{} bytes do not form {} binary32 leads", bytes.len(), meta.leads)));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut rec = EcgRecord::new(samples, meta.leads, meta.sampling_rate, meta.database_id, meta.record_id)?;
    rec.labels = meta.labels;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn database_ids_parse_from_their_names() {
        for d in DatabaseId::ALL {
            assert_eq!(d.name().parse::<DatabaseId>().unwrap(), d);
        }
        assert_eq!("PTB_XL".parse::<DatabaseId>().unwrap(), DatabaseId::PtbXl);
        assert!("ptbxl".parse::<DatabaseId>().is_err());
    }

    #[test]
    fn payload_is_little_endian_lead_major_binary32() {
        let dir = tempfile::tempdir().unwrap();
        let rec = EcgRecord::new(vec![1.0, 2.0, -0.5, 3.25], 2, 250.0, DatabaseId::Ptb, "r1")
            .unwrap()
            .with_labels(vec![0, 1]);
        let path = write_record(dir.path(), &rec).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[8..12], &(-0.5f32).to_le_bytes());
        let back = read_record(&path).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.lead(1), &[-0.5, 3.25]);
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let rec = EcgRecord::new(vec![0.0; 24], 12, 500.0, DatabaseId::Synthetic, "r").unwrap();
        let path = write_record(dir.path(), &rec).unwrap();
        std::fs::write(&path, [0u8; 10]).unwrap();
        assert!(matches!(read_record(&path), Err(Error::Format { .. })));
    }
}
