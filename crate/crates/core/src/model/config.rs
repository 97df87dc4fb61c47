use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder_dim: usize,
    pub encoder_blocks: usize,
    pub encoder_heads: usize,
    pub predictor_dim: usize,
    pub predictor_blocks: usize,
    pub predictor_heads: usize,
    pub mlp_ratio: usize,
    pub dropout: f64,
    /// Linear-layer biases; only `false` is supported.
    pub bias: bool,
    pub patch_size: usize,
    pub leads: usize,
}

impl ModelConfig {
    fn preset(dim: usize, blocks: usize, heads: usize) -> Self {
        Self {
            encoder_dim: dim,
            encoder_blocks: blocks,
            encoder_heads: heads,
            predictor_dim: dim / 2,
            predictor_blocks: blocks,
            predictor_heads: heads,
            mlp_ratio: 4,
            dropout: 0.0,
            bias: false,
            patch_size: 25,
            leads: 12,
        }
    }

    pub fn vit_xs() -> Self {
        Self::preset(192, 8, 4)
    }

    pub fn vit_s() -> Self {
        Self::preset(384, 8, 6)
    }

    pub fn vit_b() -> Self {
        Self::preset(768, 12, 12)
    }

    /// Small CPU-scale model: `dim`-wide encoder and `blocks` blocks on each side.
    pub fn tiny(dim: usize, blocks: usize, heads: usize) -> Self {
        Self::preset(dim, blocks, heads)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "vit-xs" => Some(Self::vit_xs()),
            "vit-s" => Some(Self::vit_s()),
            "vit-b" => Some(Self::vit_b()),
            "tiny" => Some(Self::tiny(32, 2, 2)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.bias {
            return bad("bias=true is not supported; all projections are bias-free".into());
        }
        if self.predictor_dim * 2 != self.encoder_dim {
            return bad(format!(
                "predictor_dim {} must be half of encoder_dim {}",
                self.predictor_dim, self.encoder_dim
            ));
        }
        for (dim, heads, who) in [
            (self.encoder_dim, self.encoder_heads, "encoder"),
            (self.predictor_dim, self.predictor_heads, "predictor"),
        ] {
            if heads == 0 || dim % heads != 0 {
                return bad(format!("{who} dim {dim} is not divisible by {heads} heads"));
            }
            if dim % 2 != 0 || dim < 2 {
                return bad(format!("{who} dim {dim} must be even"));
            }
        }
        if self.patch_size == 0 || self.leads == 0 || self.mlp_ratio == 0 {
            return bad("patch_size, leads and mlp_ratio must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn mlp_dim(&self, dim: usize) -> usize {
        dim * self.mlp_ratio
    }
}

fn block_params(dim: usize, mlp_ratio: usize) -> usize {
    // two norm scales, q/k/v/out projections, two MLP matrices
    2 * dim + 4 * dim * dim + 2 * dim * dim * mlp_ratio
}

/// Learnable parameters of the encoder: tokenizer, register token, blocks
/// and the final norm. This is the network kept for downstream use.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let d = cfg.encoder_dim;
    d * cfg.leads * cfg.patch_size + d + cfg.encoder_blocks * block_params(d, cfg.mlp_ratio) + d
}

/// Learnable parameters of the predictor.
pub fn count_predictor_params(cfg: &ModelConfig) -> usize {
    let (e, p) = (cfg.encoder_dim, cfg.predictor_dim);
    e * p + p + cfg.predictor_blocks * block_params(p, cfg.mlp_ratio) + p + p * e
}
