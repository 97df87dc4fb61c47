//! Flat `key = value` run configuration.
//!
//! Keys are `section.field` (for example `train.lr_start`). Lines starting
//! with `#` are comments. Values written by [`RunConfig::to_text`] parse back
//! to identical configs.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::eval::{EvalConfig, EvalMode, Pooling};
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Scalar that can be stored in a config file.
pub trait KvValue: Sized {
    fn to_kv(&self) -> String;
    fn from_kv(s: &str) -> Option<Self>;
}

impl KvValue for f64 {
    fn to_kv(&self) -> String {
        // Debug prints the shortest string that parses back exactly.
        format!("{self:?}")
    }
    fn from_kv(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

macro_rules! kv_via_display {
    ($($t:ty),*) => {$(
        impl KvValue for $t {
            fn to_kv(&self) -> String {
                self.to_string()
            }
            fn from_kv(s: &str) -> Option<Self> {
                <$t as FromStr>::from_str(s).ok()
            }
        }
    )*};
}

kv_via_display!(usize, u64, bool, String, Precision, EvalMode, Pooling);

/// A named group of config keys.
pub trait Section {
    fn entries(&self) -> Vec<(&'static str, String)>;
    fn set(&mut self, key: &str, value: &str) -> Result<()>;
}

pub(crate) fn parse_kv<V: KvValue>(key: &str, value: &str) -> Result<V> {
    V::from_kv(value).ok_or_else(|| Error::Config(format!("invalid value {value:?} for {key}")))
}

macro_rules! section {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::config::Section for $ty {
            fn entries(&self) -> Vec<(&'static str, String)> {
                use $crate::config::KvValue;
                vec![$((stringify!($field), self.$field.to_kv())),*]
            }
            fn set(&mut self, key: &str, value: &str) -> $crate::Result<()> {
                match key {
                    $(stringify!($field) => self.$field = $crate::config::parse_kv(key, value)?,)*
                    _ => return Err($crate::Error::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }
        }
    };
}
pub(crate) use section;

/// `model.*` entries describing `cfg`, as stored in checkpoint metadata.
pub fn model_meta(cfg: &ModelConfig) -> Vec<(String, String)> {
    cfg.entries().into_iter().map(|(k, v)| (format!("model.{k}"), v)).collect()
}

section!(ModelConfig {
    encoder_dim,
    encoder_blocks,
    encoder_heads,
    predictor_dim,
    predictor_blocks,
    predictor_heads,
    mlp_ratio,
    dropout,
    bias,
    patch_size,
    leads,
});

section!(TrainConfig {
    total_steps,
    batch_size,
    lr_start,
    lr_end,
    warmup_steps,
    wd_start,
    wd_end,
    beta1,
    beta2,
    eps,
    ema_start,
    ema_end,
    mask_min,
    mask_max,
    crop_seconds,
    checkpoint_every,
    log_every,
    seed,
});

/// Floating-point width used for training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("unknown precision {s:?}"))),
        }
    }
}

/// Run-level settings shared by every command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub precision: Precision,
    /// Run kernels on the calling thread only.
    pub sequential: bool,
    pub out_dir: String,
    pub manifest: String,
    pub stats: String,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F32,
            sequential: false,
            out_dir: "runs/default".into(),
            manifest: String::new(),
            stats: String::new(),
        }
    }
}

section!(RunSettings {
    seed,
    precision,
    sequential,
    out_dir,
    manifest,
    stats,
});

/// Complete configuration of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub run: RunSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::vit_xs()
    }
}

impl RunConfig {
    /// Applies one `section.key` assignment. `model.preset` and `eval.mode`
    /// reset their section to the named defaults, so later lines override them.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("key {key:?} lacks a section")))?;
        match (section, field) {
            ("model", "preset") => {
                self.model = ModelConfig::by_name(value)
                    .ok_or_else(|| Error::Config(format!("unknown model preset {value:?}")))?;
                Ok(())
            }
            ("eval", "mode") => {
                self.eval = EvalConfig::for_mode(parse_kv(key, value)?);
                Ok(())
            }
            ("run", f) => self.run.set(f, value),
            ("model", f) => self.model.set(f, value),
            ("train", f) => self.train.set(f, value),
            ("eval", f) => self.eval.set(f, value),
            _ => Err(Error::Config(format!("unknown section in {key:?}"))),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key in section order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let tag = |s: &str, e: Vec<(&'static str, String)>| {
            e.into_iter().map(move |(k, v)| (format!("{s}.{k}"), v)).collect::<Vec<_>>()
        };
        let mut all = tag("run", self.run.entries());
        all.extend(tag("model", self.model.entries()));
        all.extend(tag("train", self.train.entries()));
        all.extend(tag("eval", self.eval.entries()));
        all
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved ecg-jepa configuration\n");
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// Rebuilds a config from `key value` pairs such as checkpoint metadata.
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.set("model.preset", "tiny").unwrap();
        cfg.set("train.lr_start", "0.0003").unwrap();
        cfg.set("train.eps", "1e-8").unwrap();
        cfg.set("eval.mode", "two_stage").unwrap();
        cfg.set("run.precision", "f64").unwrap();
        cfg.train.wd_end = 0.1 + 0.2;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("train.nope = 1").is_err());
        assert!(RunConfig::parse("train.total_steps = many").is_err());
        assert!(RunConfig::parse("just text").is_err());
    }
}
