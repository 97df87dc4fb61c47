use std::f64::consts::PI;

use crate::masking::DEFAULT_RATIO;
use crate::{Error, Result};

/// Pre-training hyperparameters. Defaults are the full-scale values.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub warmup_steps: u64,
    pub wd_start: f64,
    pub wd_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub ema_start: f64,
    pub ema_end: f64,
    pub mask_min: f64,
    pub mask_max: f64,
    /// Length of the random window cut from each record per step.
    pub crop_seconds: f64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            batch_size: 2048,
            lr_start: 1e-3,
            lr_end: 1e-6,
            warmup_steps: 10_000,
            wd_start: 0.01,
            wd_end: 0.1,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-6,
            ema_start: 0.998,
            ema_end: 0.9995,
            mask_min: DEFAULT_RATIO.0,
            mask_max: DEFAULT_RATIO.1,
            crop_seconds: 10.0,
            checkpoint_every: 5000,
            log_every: 100,
            seed: 0,
        }
    }
}

/// Cosine interpolation from `start` (progress 0) to `end` (progress 1).
fn cosine(start: f64, end: f64, progress: f64) -> f64 {
    let w = 0.5 * (1.0 + (PI * progress.clamp(0.0, 1.0)).cos());
    start * w + end * (1.0 - w)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return fail("need 0 < lr_end <= lr_start");
        }
        if !(0.5 < self.ema_start && self.ema_start <= self.ema_end && self.ema_end < 1.0) {
            return fail("need 0.5 < ema_start <= ema_end < 1");
        }
        if self.warmup_steps > self.total_steps {
            return fail("warmup_steps exceeds total_steps");
        }
        if !(0.0 < self.mask_min && self.mask_min <= self.mask_max && self.mask_max < 1.0) {
            return fail("need 0 < mask_min <= mask_max < 1");
        }
        if self.batch_size == 0 || self.crop_seconds <= 0.0 {
            return fail("batch_size and crop_seconds must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return fail("betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    /// Linear warm-up to `lr_start`, then cosine decay to `lr_end` at `total_steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.lr_start * step as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps);
        if span == 0 {
            return self.lr_end;
        }
        cosine(self.lr_start, self.lr_end, (step - self.warmup_steps) as f64 / span as f64)
    }

    pub fn wd_at(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.wd_end;
        }
        cosine(self.wd_start, self.wd_end, step as f64 / self.total_steps as f64)
    }

    pub fn ema_momentum_at(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.ema_end;
        }
        let t = (step as f64 / self.total_steps as f64).min(1.0);
        self.ema_start * (1.0 - t) + self.ema_end * t
    }

    pub fn crop_samples(&self, rate: f64) -> usize {
        (self.crop_seconds * rate).round() as usize
    }
}
