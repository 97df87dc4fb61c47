use std::fmt::Display;
use std::str::FromStr;

use crate::{Error, Result};

/// Downstream protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalMode {
    /// Frozen encoder, trained pooling head.
    Linear,
    /// End-to-end training with a linear head on the register token.
    Finetune,
    /// End-to-end training starting from a linear-mode artifact.
    TwoStage,
}

impl Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Linear => "linear",
            EvalMode::Finetune => "finetune",
            EvalMode::TwoStage => "two_stage",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" => Ok(EvalMode::Linear),
            "finetune" | "fine_tune" => Ok(EvalMode::Finetune),
            "two_stage" => Ok(EvalMode::TwoStage),
            _ => Err(Error::Config(format!("unknown eval mode {s:?}"))),
        }
    }
}

/// How the head summarizes encoder outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pooling {
    /// Single-query cross-attention over patch embeddings.
    Attention,
    /// Register-token embedding.
    Register,
}

impl Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pooling::Attention => "attention",
            Pooling::Register => "register",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Pooling::Attention),
            "register" => Ok(Pooling::Register),
            _ => Err(Error::Config(format!("unknown pooling {s:?}"))),
        }
    }
}

/// Downstream training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub lr_start: f64,
    pub lr_end: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub pooling: Pooling,
    pub dropout: f64,
    pub bias: bool,
    pub steps: u64,
    pub batch_size: usize,
    /// Validation cadence for early stopping.
    pub eval_every: u64,
    pub crop_seconds: f64,
    pub stride_seconds: f64,
    /// Downstream heads read the EMA teacher rather than the student.
    pub use_ema: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::for_mode(EvalMode::Linear)
    }
}

impl EvalConfig {
    /// Defaults for each protocol.
    pub fn for_mode(mode: EvalMode) -> Self {
        let (lr_start, lr_end, warmup_steps, weight_decay, beta2, pooling, dropout) = match mode {
            EvalMode::Linear => (1e-3, 1e-3, 0, 0.1, 0.999, Pooling::Attention, 0.0),
            EvalMode::Finetune => (1e-3, 1e-5, 200, 0.01, 0.99, Pooling::Register, 0.05),
            EvalMode::TwoStage => (1e-4, 1e-6, 200, 0.0, 0.999, Pooling::Attention, 0.1),
        };
        Self {
            mode,
            lr_start,
            lr_end,
            warmup_steps,
            weight_decay,
            beta1: 0.9,
            beta2,
            eps: 1e-8,
            pooling,
            dropout,
            bias: false,
            steps: 5000,
            batch_size: 128,
            eval_every: 250,
            crop_seconds: 2.5,
            stride_seconds: 1.25,
            use_ema: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.bias {
            return fail("eval.bias=true is not supported");
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return fail("need 0 < eval.lr_end <= eval.lr_start");
        }
        if self.warmup_steps > self.steps {
            return fail("eval.warmup_steps exceeds eval.steps");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("eval.dropout outside [0, 1)");
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return fail("eval.batch_size and eval.eval_every must be positive");
        }
        if self.crop_seconds <= 0.0 || self.stride_seconds <= 0.0 {
            return fail("crop and stride lengths must be positive");
        }
        Ok(())
    }

    /// Linear warm-up then cosine decay over `steps`; constant when start
    /// and end coincide.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.lr_start * step as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps);
        if span == 0 {
            return self.lr_end;
        }
        let p = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let w = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        self.lr_start * w + self.lr_end * (1.0 - w)
    }

    /// Trains the encoder as well as the head.
    pub fn trains_encoder(&self) -> bool {
        self.mode != EvalMode::Linear
    }
}

crate::config::section!(EvalConfig {
    mode,
    lr_start,
    lr_end,
    warmup_steps,
    weight_decay,
    beta1,
    beta2,
    eps,
    pooling,
    dropout,
    bias,
    steps,
    batch_size,
    eval_every,
    crop_seconds,
    stride_seconds,
    use_ema,
});
