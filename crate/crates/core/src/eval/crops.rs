use rand::Rng;

use crate::ingest::{random_crop, EcgRecord};

/// Zero-pads every lead at the end up to `len` samples.
fn pad(rec: &EcgRecord, len: usize) -> EcgRecord {
    log::warn!("record {} has {} samples, padding to {len}", rec.record_id, rec.len());
    let mut out = rec.window(0, 0);
    for l in 0..rec.leads {
        out.samples.extend_from_slice(rec.lead(l));
        out.samples.resize((l + 1) * len, 0.0);
    }
    out
}

/// One random window of `len` samples; shorter records are zero-padded.
pub fn train_crop<R: Rng + ?Sized>(rec: &EcgRecord, len: usize, rng: &mut R) -> EcgRecord {
    if rec.len() < len {
        return pad(rec, len);
    }
    random_crop(rec, len, rng).expect("record is long enough")
}

/// Windows of `len` samples every `stride` samples while they fit; a single
/// padded window for records shorter than `len`.
pub fn eval_crops(rec: &EcgRecord, len: usize, stride: usize) -> Vec<EcgRecord> {
    if rec.len() < len {
        return vec![pad(rec, len)];
    }
    (0..=rec.len() - len).step_by(stride.max(1)).map(|o| rec.window(o, len)).collect()
}
