//! Synthetic 12-lead ECG: Gaussian-bump P/QRS/T beats with rate variability,
//! per-lead projections, sensor noise and optional baseline drift.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DatabaseId, EcgRecord};

// Per-lead gains of the QRS complex and of the P/T waves
// (I, II, III, aVR, aVL, aVF, V1..V6).
const QRS_GAIN: [f64; 12] = [1.0, 1.2, 0.4, -0.9, 0.5, 0.8, -0.6, -0.2, 0.4, 1.0, 1.3, 1.1];
const WAVE_GAIN: [f64; 12] = [0.3, 0.4, 0.15, -0.3, 0.15, 0.25, 0.1, 0.3, 0.5, 0.5, 0.4, 0.3];

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub sampling_rate: f64,
    /// Strength of the class-dependent morphology change (0 disables it).
    pub class_effect: f64,
    /// Standard deviation of additive white noise in mV.
    pub noise: f64,
    pub drift: bool,
    pub database: DatabaseId,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            sampling_rate: 500.0,
            class_effect: 1.0,
            noise: 0.03,
            drift: false,
            database: DatabaseId::Synthetic,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Wave {
    offset: f64,
    width: f64,
    amp: f64,
    qrs: bool,
}

/// Beat template for a class. Bit 0 flips and shrinks the T wave, bit 1
/// widens the QRS complex, bit 2 adds ST elevation.
fn template(class_id: Option<usize>, effect: f64) -> Vec<Wave> {
    let c = class_id.unwrap_or(0);
    let flip_t = c & 1 == 1;
    let wide = c & 2 == 2;
    let st = c & 4 == 4;
    let qrs_scale = if wide { 1.0 + 0.6 * effect } else { 1.0 };
    let t_amp = if flip_t { 1.0 - 1.6 * effect } else { 1.0 };
    let mut waves = vec![
        Wave { offset: -0.16, width: 0.025, amp: 0.4, qrs: false },
        Wave { offset: -0.025 * qrs_scale, width: 0.008 * qrs_scale, amp: -0.12, qrs: true },
        Wave { offset: 0.0, width: 0.011 * qrs_scale, amp: 1.0, qrs: true },
        Wave { offset: 0.025 * qrs_scale, width: 0.009 * qrs_scale, amp: -0.25, qrs: true },
        Wave { offset: 0.28, width: 0.045, amp: t_amp, qrs: false },
    ];
    if st {
        waves.push(Wave { offset: 0.12, width: 0.05, amp: 0.5 * effect, qrs: false });
    }
    waves
}

pub fn synth_ecg<R: Rng + ?Sized>(rng: &mut R, seconds: f64, leads: usize, class_id: Option<usize>) -> EcgRecord {
    synth_ecg_with(&SynthOptions::default(), rng, seconds, leads, class_id)
}

/// Generates one record; the same RNG state always yields the same record.
pub fn synth_ecg_with<R: Rng + ?Sized>(
    opts: &SynthOptions,
    rng: &mut R,
    seconds: f64,
    leads: usize,
    class_id: Option<usize>,
) -> EcgRecord {
    assert!(seconds > 0.0 && leads > 0, "seconds and leads must be positive");
    let rate = opts.sampling_rate;
    let n = (seconds * rate).round() as usize;
    let bpm: f64 = rng.random_range(50.0..100.0);
    let rr = 60.0 / bpm;
    let gain = rng.random_range(0.8..1.2);
    let axis_jitter: Vec<f64> = (0..leads).map(|_| rng.random_range(0.85..1.15)).collect();
    let waves = template(class_id, opts.class_effect);
    // QT interval stretches with the RR interval
    let qt_scale = (rr / 0.8).sqrt();

    let mut beats = Vec::new();
    let mut t = rng.random_range(0.0..rr);
    let jitter = Normal::new(0.0, 0.02 * rr).expect("valid normal");
    while t < seconds + 0.5 {
        beats.push(t);
        t += rr + jitter.sample(rng);
    }

    let mut template_wave = vec![0.0f64; n];
    let mut qrs_wave = vec![0.0f64; n];
    for &beat in &beats {
        for w in &waves {
            let offset = if w.offset > 0.1 { w.offset * qt_scale } else { w.offset };
            let center = beat + offset;
            let reach = 5.0 * w.width;
            let lo = (((center - reach) * rate).floor().max(0.0)) as usize;
            let hi = (((center + reach) * rate).ceil().max(0.0) as usize).min(n);
            let dst = if w.qrs { &mut qrs_wave } else { &mut template_wave };
            for (i, slot) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                let z = (i as f64 / rate - center) / w.width;
                *slot += w.amp * (-0.5 * z * z).exp();
            }
        }
    }

    let noise = Normal::new(0.0, opts.noise.max(1e-12)).expect("valid normal");
    let mut samples = Vec::with_capacity(leads * n);
    for l in 0..leads {
        let qg = QRS_GAIN[l % 12] * axis_jitter[l] * gain;
        let wg = WAVE_GAIN[l % 12] * axis_jitter[l] * gain;
        let (drift_amp, drift_f, drift_phase, offset) = if opts.drift {
            (
                rng.random_range(0.1..0.4),
                rng.random_range(0.1..0.4),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(-0.2..0.2),
            )
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        for i in 0..n {
            let time = i as f64 / rate;
            let mut v = qg * qrs_wave[i] + wg * template_wave[i];
            if opts.drift {
                v += offset + drift_amp * (2.0 * PI * drift_f * time + drift_phase).sin();
            }
            if opts.noise > 0.0 {
                v += noise.sample(rng);
            }
            samples.push(v as f32);
        }
    }
    let id = format!("syn-{:016x}", rng.random::<u64>());
    EcgRecord::new(samples, leads, rate, opts.database, id).expect("consistent synthetic shape")
}
