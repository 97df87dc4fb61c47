use std::path::Path;

use crate::ingest::{read_manifest, read_record, EcgRecord, Fold};
use crate::{Error, Result};

/// Labelled records with a fold number each (9 validation, 10 test, other
/// numbers training).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    records: Vec<EcgRecord>,
    folds: Vec<u8>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(records: Vec<EcgRecord>, folds: Vec<u8>) -> Result<Self> {
        if records.len() != folds.len() {
            return Err(Error::shape("LabeledDataset", records.len(), folds.len()));
        }
        let classes = match records.first().map(|r| r.labels.as_ref()) {
            Some(Some(l)) => l.len(),
            Some(None) => return Err(Error::Config(format!("record {} has no labels", records[0].record_id))),
            None => return Err(Error::Config("empty labelled dataset".into())),
        };
        for r in &records {
            match &r.labels {
                Some(l) if l.len() == classes => {}
                _ => {
                    return Err(Error::Config(format!(
                        "record {} needs a {classes}-class label vector",
                        r.record_id
                    )))
                }
            }
        }
        Ok(Self { records, folds, classes })
    }

    /// Loads every manifest entry; each entry must carry a fold.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut folds = Vec::new();
        for e in read_manifest(path)? {
            let fold = e
                .fold
                .ok_or_else(|| Error::format(path, format!("{} has no fold", e.path.display())))?;
            records.push(read_record(&e.path)?);
            folds.push(fold);
        }
        Self::new(records, folds)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EcgRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &EcgRecord {
        &self.records[i]
    }

    pub fn labels(&self, i: usize) -> &[u8] {
        self.records[i].labels.as_deref().expect("validated on construction")
    }

    pub fn indices(&self, fold: Fold) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| Fold::from_number(self.folds[i]) == fold)
            .collect()
    }
}
