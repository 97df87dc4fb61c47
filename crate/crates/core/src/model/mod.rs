//! ViT encoder with one register token and the half-width predictor.

mod checkpoint;
mod config;
mod params;
mod positions;
mod vit;

pub use checkpoint::{Checkpoint, RngState};
pub use config::{count_params, count_predictor_params, ModelConfig};
pub use params::{EmaEncoder, ModelParams, Param, ParamKind, ParamSet};
pub use positions::sinusoidal_positions;
pub use vit::{DropoutCtx, Encoded, Encoder, JepaModel, Predictor, LN_EPS};

use crate::tensor::Var;

/// Token embeddings `[B, n, dim]` in a graph plus each token's patch index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchBatch {
    pub tokens: Var,
    pub positions: Vec<Vec<usize>>,
}
