//! Record standardization: NaN interpolation, resampling to 500 Hz,
//! per-database normalization with five-sigma clipping, random 10 s crops and
//! baseline-wander removal.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatabaseId, DatabaseStats, EcgRecord};
use crate::par::{self, Exec};
use crate::{Error, Result};

pub const TARGET_RATE: f64 = 500.0;
pub const RECORD_SECONDS: f64 = 10.0;
pub const CLIP_SIGMA: f32 = 5.0;

/// Replaces NaN (and infinite) samples by linear interpolation between the
/// nearest finite neighbours; edge runs copy the nearest finite value.
pub fn interpolate_nans(mut rec: EcgRecord) -> Result<EcgRecord> {
    for l in 0..rec.leads {
        let lead = rec.lead_mut(l);
        let finite: Vec<usize> = (0..lead.len()).filter(|&i| lead[i].is_finite()).collect();
        let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
            return Err(Error::AllNanLead {
                record: rec.record_id.clone(),
                lead: l,
            });
        };
        if finite.len() == lead.len() {
            continue;
        }
        let (head, tail) = (lead[first], lead[last]);
        lead[..first].iter_mut().for_each(|x| *x = head);
        lead[last + 1..].iter_mut().for_each(|x| *x = tail);
        for pair in finite.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a < 2 {
                continue;
            }
            let (ya, yb) = (lead[a] as f64, lead[b] as f64);
            let span = (b - a) as f64;
            for i in a + 1..b {
                let t = (i - a) as f64 / span;
                lead[i] = (ya + (yb - ya) * t) as f32;
            }
        }
    }
    Ok(rec)
}

/// Linear-interpolation resampling to `target` Hz; output length is
/// `round(T * target / rate)`.
pub fn resample(rec: EcgRecord, target: f64) -> EcgRecord {
    if rec.sampling_rate == target {
        return rec;
    }
    let n = rec.len();
    let out_len = (n as f64 * target / rec.sampling_rate).round() as usize;
    let ratio = rec.sampling_rate / target;
    let mut samples = Vec::with_capacity(rec.leads * out_len);
    for l in 0..rec.leads {
        let lead = rec.lead(l);
        samples.extend((0..out_len).map(|j| {
            let s = j as f64 * ratio;
            let i0 = s.floor() as usize;
            if i0 + 1 >= n {
                return lead[n - 1];
            }
            let frac = s - i0 as f64;
            (lead[i0] as f64 * (1.0 - frac) + lead[i0 + 1] as f64 * frac) as f32
        }));
    }
    EcgRecord {
        samples,
        sampling_rate: target,
        ..rec.meta_clone()
    }
}

pub fn resample_500hz(rec: EcgRecord) -> EcgRecord {
    resample(rec, TARGET_RATE)
}

/// `(x - mean) / std` with the record's database statistics, clamped to ±5.
pub fn normalize_and_clip(mut rec: EcgRecord, stats: &DatabaseStats) -> Result<EcgRecord> {
    let s = stats
        .get(rec.database)
        .ok_or_else(|| Error::MissingStats(rec.database.to_string()))?;
    let (mean, std) = (s.mean, s.std);
    for x in &mut rec.samples {
        let z = ((*x as f64 - mean) / std) as f32;
        *x = z.clamp(-CLIP_SIGMA, CLIP_SIGMA);
    }
    Ok(rec)
}

/// Uniformly placed window of `len` samples; `None` when the record is shorter.
pub fn random_crop<R: Rng + ?Sized>(rec: &EcgRecord, len: usize, rng: &mut R) -> Option<EcgRecord> {
    let n = rec.len();
    if n < len {
        return None;
    }
    let offset = if n == len { 0 } else { rng.random_range(0..=n - len) };
    Some(rec.window(offset, len))
}

/// Random 10 s crop; records shorter than 10 s are rejected with `None`.
pub fn crop_10s<R: Rng + ?Sized>(rec: &EcgRecord, rng: &mut R) -> Option<EcgRecord> {
    let len = (RECORD_SECONDS * rec.sampling_rate).round() as usize;
    random_crop(rec, len, rng)
}

/// Centered running median; windows shrink at the edges.
pub fn moving_median(x: &[f32], window: usize) -> Vec<f32> {
    let n = x.len();
    if n == 0 || window <= 1 {
        return x.to_vec();
    }
    let half = window / 2;
    let mut sorted: Vec<f32> = Vec::with_capacity(window + 1);
    let insert = |v: &mut Vec<f32>, e: f32| {
        let at = v.partition_point(|p| p.total_cmp(&e).is_lt());
        v.insert(at, e);
    };
    for &e in &x[..half.min(n)] {
        insert(&mut sorted, e);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i + half < n {
            insert(&mut sorted, x[i + half]);
        }
        if i > half {
            let gone = x[i - half - 1];
            let at = sorted.partition_point(|p| p.total_cmp(&gone).is_lt());
            sorted.remove(at);
        }
        let m = sorted.len();
        out.push(if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        });
    }
    out
}

/// Subtracts a two-stage running-median baseline (200 ms, then 600 ms).
pub fn remove_baseline_wander(mut rec: EcgRecord) -> EcgRecord {
    let odd = |seconds: f64| ((seconds * rec.sampling_rate).round() as usize) | 1;
    let (short, long) = (odd(0.2), odd(0.6));
    for l in 0..rec.leads {
        let lead = rec.lead_mut(l);
        let baseline = moving_median(&moving_median(lead, short), long);
        for (x, b) in lead.iter_mut().zip(baseline) {
            *x -= b;
        }
    }
    rec
}

#[derive(Clone, Debug)]
pub struct PreprocessOptions {
    pub leads: usize,
    /// Databases that get baseline-wander removal.
    pub baseline_databases: BTreeSet<DatabaseId>,
    /// Use these statistics instead of computing them from the corpus.
    pub stats: Option<DatabaseStats>,
    pub exec: Exec,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            leads: 12,
            baseline_databases: DatabaseId::ALL
                .into_iter()
                .filter(|d| d.needs_baseline_removal())
                .collect(),
            stats: None,
            exec: Exec::default_mode(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PrepareReport {
    pub kept: usize,
    pub rejected: Vec<(String, String)>,
}

/// Runs the full pipeline over a corpus. Statistics are computed per database
/// after resampling and baseline removal unless supplied in `opts`. Each
/// record's crop uses its own RNG stream, so output is independent of thread
/// count.
pub fn prepare_corpus(
    records: Vec<EcgRecord>,
    opts: &PreprocessOptions,
    seed: u64,
) -> (Vec<EcgRecord>, DatabaseStats, PrepareReport) {
    let mut report = PrepareReport::default();
    let staged: Vec<std::result::Result<EcgRecord, (String, String)>> = par::map(opts.exec, &records, |_, rec| {
        let reject = |e: Error| (rec.record_id.clone(), e.to_string());
        if rec.leads != opts.leads {
            return Err(reject(Error::Config(format!("expected {} leads, found {}", opts.leads, rec.leads))));
        }
        let rec = resample_500hz(interpolate_nans(rec.clone()).map_err(reject)?);
        Ok(if opts.baseline_databases.contains(&rec.database) {
            remove_baseline_wander(rec)
        } else {
            rec
        })
    });
    drop(records);
    let mut clean = Vec::with_capacity(staged.len());
    for (i, r) in staged.into_iter().enumerate() {
        match r {
            Ok(rec) => clean.push((i, rec)),
            Err(rej) => report.rejected.push(rej),
        }
    }
    let stats = match &opts.stats {
        Some(s) => s.clone(),
        None => DatabaseStats::compute(clean.iter().map(|(_, r)| r)),
    };
    let finished: Vec<std::result::Result<EcgRecord, (String, String)>> = par::map(opts.exec, &clean, |_, (i, rec)| {
        let rec = normalize_and_clip(rec.clone(), &stats).map_err(|e| (rec.record_id.clone(), e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(*i as u64);
        crop_10s(&rec, &mut rng).ok_or_else(|| (rec.record_id.clone(), format!("shorter than {RECORD_SECONDS} s")))
    });
    let mut out = Vec::with_capacity(finished.len());
    for r in finished {
        match r {
            Ok(rec) => out.push(rec),
            Err(rej) => report.rejected.push(rej),
        }
    }
    report.kept = out.len();
    (out, stats, report)
}
