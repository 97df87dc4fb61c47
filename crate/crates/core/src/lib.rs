//! Joint-embedding predictive pre-training for 12-lead ECG.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`tensor`]) backs a ViT encoder/predictor pair ([`model`]) that is trained
//! by predicting the teacher's latent features of masked patch blocks
//! ([`masking`], [`trainer`]). [`ingest`] turns raw recordings into the
//! canonical 500 Hz, 10 s, 12-lead form and [`eval`] scores learned
//! representations with linear probing and fine-tuning.
//!
//! With the default `parallel` feature, dense kernels and per-record work run
//! on rayon. Row-partitioned kernels produce bit-identical results in both
//! modes.

pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod masking;
pub mod model;
pub mod par;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
