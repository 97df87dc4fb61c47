use rand::{Rng, RngCore};

use super::config::ModelConfig;
use super::params::{ModelParams, ParamKind, ParamSet};
use super::positions::sinusoidal_positions;
use super::PatchBatch;
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

pub const LN_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;

/// Optional stochastic dropout applied after attention and MLP outputs.
pub struct DropoutCtx<'a> {
    pub p: f64,
    pub rng: &'a mut dyn RngCore,
}

#[derive(Clone, Debug)]
struct BlockLayout {
    norm1: usize,
    q: usize,
    k: usize,
    v: usize,
    proj: usize,
    norm2: usize,
    fc1: usize,
    fc2: usize,
}

fn push_block<T: Real, R: Rng + ?Sized>(
    set: &mut ParamSet<T>,
    prefix: &str,
    dim: usize,
    mlp: usize,
    depth_scale: f64,
    rng: &mut R,
) -> BlockLayout {
    let mut lin = |set: &mut ParamSet<T>, name: &str, shape: [usize; 2], std: f64| {
        set.push(format!("{prefix}.{name}"), ParamKind::Linear, Tensor::randn(shape, std, rng))
    };
    let norm1 = set.push(format!("{prefix}.norm1.scale"), ParamKind::Norm, Tensor::full([dim], T::one()));
    let q = lin(set, "attn.q.weight", [dim, dim], INIT_STD);
    let k = lin(set, "attn.k.weight", [dim, dim], INIT_STD);
    let v = lin(set, "attn.v.weight", [dim, dim], INIT_STD);
    let proj = lin(set, "attn.proj.weight", [dim, dim], INIT_STD * depth_scale);
    let norm2 = set.push(format!("{prefix}.norm2.scale"), ParamKind::Norm, Tensor::full([dim], T::one()));
    let fc1 = lin(set, "mlp.fc1.weight", [dim, mlp], INIT_STD);
    let fc2 = lin(set, "mlp.fc2.weight", [mlp, dim], INIT_STD * depth_scale);
    BlockLayout {
        norm1,
        q,
        k,
        v,
        proj,
        norm2,
        fc1,
        fc2,
    }
}

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
fn block<T: Real>(
    g: &mut Graph<T>,
    w: &[Var],
    l: &BlockLayout,
    x: Var,
    heads: usize,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<Var> {
    let (b, n, d) = match g.shape(x) {
        [b, n, d] => (*b, *n, *d),
        s => return Err(Error::shape("block", "[B, n, d]", format!("{s:?}"))),
    };
    let dh = d / heads;
    let h = g.layer_norm(x, w[l.norm1], LN_EPS)?;
    let split = |g: &mut Graph<T>, wi: usize| -> Result<Var> {
        let p = g.linear(h, w[wi])?;
        let p = g.reshape(p, [b, n, heads, dh])?;
        let p = g.permute(p, &[0, 2, 1, 3])?;
        g.reshape(p, [b * heads, n, dh])
    };
    let q = split(g, l.q)?;
    let k = split(g, l.k)?;
    let v = split(g, l.v)?;
    let s = g.bmm(q, k, true)?;
    let s = g.scale(s, 1.0 / (dh as f64).sqrt());
    let a = g.softmax(s);
    let o = g.bmm(a, v, false)?;
    let o = g.reshape(o, [b, heads, n, dh])?;
    let o = g.permute(o, &[0, 2, 1, 3])?;
    let o = g.reshape(o, [b, n, d])?;
    let o = g.linear(o, w[l.proj])?;
    let o = apply_dropout(g, o, dropout);
    let x = g.add(x, o)?;

    let h = g.layer_norm(x, w[l.norm2], LN_EPS)?;
    let h = g.linear(h, w[l.fc1])?;
    let h = g.gelu(h);
    let h = g.linear(h, w[l.fc2])?;
    let h = apply_dropout(g, h, dropout);
    g.add(x, h)
}

fn apply_dropout<T: Real>(g: &mut Graph<T>, x: Var, ctx: &mut Option<DropoutCtx<'_>>) -> Var {
    match ctx {
        Some(c) if c.p > 0.0 => g.dropout(x, c.p, &mut *c.rng),
        _ => x,
    }
}

/// Constant positional encodings for per-sample index lists, `[B, n, dim]`.
fn position_tensor<T: Real>(positions: &[Vec<usize>], dim: usize) -> Result<Tensor<T>> {
    let n = positions.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(positions.len() * n * dim);
    for p in positions {
        if p.len() != n {
            return Err(Error::shape("positions", format!("{n} per sample"), p.len()));
        }
        data.extend_from_slice(sinusoidal_positions::<T>(p, dim)?.data());
    }
    Tensor::new(vec![positions.len(), n, dim], data)
}

/// Parameter layout of the encoder; indices point into its `ParamSet`.
#[derive(Clone, Debug)]
pub struct Encoder {
    dim: usize,
    heads: usize,
    patch: usize,
    tokenizer: usize,
    register: usize,
    blocks: Vec<BlockLayout>,
    norm: usize,
}

/// Encoder output: normalized patch tokens and the register token `[B, dim]`.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub patches: PatchBatch,
    pub register: Var,
}

impl Encoder {
    fn build<T: Real, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> (Self, ParamSet<T>) {
        let d = cfg.encoder_dim;
        let mut set = ParamSet::new();
        let tokenizer = set.push(
            "encoder.tokenizer.weight",
            ParamKind::Conv,
            Tensor::randn([d, cfg.leads, cfg.patch_size], INIT_STD, rng),
        );
        let register = set.push("encoder.register", ParamKind::Token, Tensor::randn([d], INIT_STD, rng));
        let blocks = (0..cfg.encoder_blocks)
            .map(|i| {
                let scale = 1.0 / (2.0 * (i + 1) as f64).sqrt();
                push_block(&mut set, &format!("encoder.blocks.{i}"), d, cfg.mlp_dim(d), scale, rng)
            })
            .collect();
        let norm = set.push("encoder.norm.scale", ParamKind::Norm, Tensor::full([d], T::one()));
        let layout = Self {
            dim: d,
            heads: cfg.encoder_heads,
            patch: cfg.patch_size,
            tokenizer,
            register,
            blocks,
            norm,
        };
        (layout, set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Tokenizes `[B, leads, T]` signals into `[B, T / patch, dim]` patch tokens.
    pub fn patchify<T: Real>(&self, g: &mut Graph<T>, w: &[Var], signals: Var) -> Result<PatchBatch> {
        let t = g.conv1d(signals, w[self.tokenizer], self.patch)?;
        let t = g.permute(t, &[0, 2, 1])?;
        let (b, n) = (g.shape(t)[0], g.shape(t)[1]);
        Ok(PatchBatch {
            tokens: t,
            positions: vec![(0..n).collect(); b],
        })
    }

    /// Adds positions, prepends the register token and runs the blocks.
    pub fn encode<T: Real>(
        &self,
        g: &mut Graph<T>,
        w: &[Var],
        input: &PatchBatch,
        mut dropout: Option<DropoutCtx<'_>>,
    ) -> Result<Encoded> {
        let b = input.positions.len();
        let n = input.positions.first().map_or(0, Vec::len);
        let pe = g.constant(position_tensor(&input.positions, self.dim)?);
        let x = g.add(input.tokens, pe)?;
        let reg = g.tile(w[self.register], b);
        let reg = g.reshape(reg, [b, 1, self.dim])?;
        let mut x = g.concat_tokens(reg, x)?;
        for l in &self.blocks {
            x = block(g, w, l, x, self.heads, &mut dropout)?;
        }
        let x = g.layer_norm(x, w[self.norm], LN_EPS)?;
        let register = g.gather_tokens(x, &vec![vec![0]; b])?;
        let register = g.reshape(register, [b, self.dim])?;
        let tokens = g.gather_tokens(x, &vec![(1..=n).collect(); b])?;
        Ok(Encoded {
            patches: PatchBatch {
                tokens,
                positions: input.positions.clone(),
            },
            register,
        })
    }

    /// Convenience: tokenize then encode every patch.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        w: &[Var],
        signals: Var,
        dropout: Option<DropoutCtx<'_>>,
    ) -> Result<Encoded> {
        let tokens = self.patchify(g, w, signals)?;
        self.encode(g, w, &tokens, dropout)
    }
}

/// Parameter layout of the predictor.
#[derive(Clone, Debug)]
pub struct Predictor {
    dim: usize,
    heads: usize,
    embed: usize,
    mask_token: usize,
    blocks: Vec<BlockLayout>,
    norm: usize,
    proj: usize,
}

impl Predictor {
    fn build<T: Real, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> (Self, ParamSet<T>) {
        let (e, p) = (cfg.encoder_dim, cfg.predictor_dim);
        let mut set = ParamSet::new();
        let embed = set.push("predictor.embed.weight", ParamKind::Linear, Tensor::randn([e, p], INIT_STD, rng));
        let mask_token = set.push("predictor.mask_token", ParamKind::Token, Tensor::randn([p], INIT_STD, rng));
        let blocks = (0..cfg.predictor_blocks)
            .map(|i| {
                let scale = 1.0 / (2.0 * (i + 1) as f64).sqrt();
                push_block(&mut set, &format!("predictor.blocks.{i}"), p, cfg.mlp_dim(p), scale, rng)
            })
            .collect();
        let norm = set.push("predictor.norm.scale", ParamKind::Norm, Tensor::full([p], T::one()));
        let proj = set.push("predictor.proj.weight", ParamKind::Linear, Tensor::randn([p, e], INIT_STD, rng));
        let layout = Self {
            dim: p,
            heads: cfg.predictor_heads,
            embed,
            mask_token,
            blocks,
            norm,
            proj,
        };
        (layout, set)
    }

    /// Predicts encoder-width representations `[B, k, D]` at `targets` from
    /// encoded context tokens. Targets must not overlap the context.
    pub fn predict<T: Real>(
        &self,
        g: &mut Graph<T>,
        w: &[Var],
        context: &PatchBatch,
        targets: &[Vec<usize>],
    ) -> Result<Var> {
        let b = context.positions.len();
        if targets.len() != b {
            return Err(Error::shape("predict", format!("{b} target lists"), targets.len()));
        }
        for (ctx, tgt) in context.positions.iter().zip(targets) {
            if let Some(&p) = tgt.iter().find(|p| ctx.contains(p)) {
                return Err(Error::TargetCollision(p));
            }
        }
        let n = context.positions.first().map_or(0, Vec::len);
        let k = targets.first().map_or(0, Vec::len);
        // Context tokens already carry encoder-side position information.
        let z = g.linear(context.tokens, w[self.embed])?;
        let m = g.tile(w[self.mask_token], b * k);
        let m = g.reshape(m, [b, k, self.dim])?;
        let pe_tgt = g.constant(position_tensor(targets, self.dim)?);
        let m = g.add(m, pe_tgt)?;
        let mut x = g.concat_tokens(z, m)?;
        for l in &self.blocks {
            x = block(g, w, l, x, self.heads, &mut None)?;
        }
        let x = g.layer_norm(x, w[self.norm], LN_EPS)?;
        let x = g.gather_tokens(x, &vec![(n..n + k).collect(); b])?;
        g.linear(x, w[self.proj])
    }
}

/// Encoder and predictor layouts for one configuration.
#[derive(Clone, Debug)]
pub struct JepaModel {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub predictor: Predictor,
}

impl JepaModel {
    /// Builds layouts and freshly initialized parameters.
    pub fn init<T: Real, R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<(Self, ModelParams<T>)> {
        config.validate()?;
        let (encoder, enc) = Encoder::build(config, rng);
        let (predictor, pred) = Predictor::build(config, rng);
        let model = Self {
            config: config.clone(),
            encoder,
            predictor,
        };
        Ok((
            model,
            ModelParams {
                encoder: enc,
                predictor: pred,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{count_params, count_predictor_params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (JepaModel, ModelParams<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        JepaModel::init(&ModelConfig::tiny(16, 1, 2), &mut rng).unwrap()
    }

    #[test]
    fn encode_shapes() {
        let (m, p) = setup();
        let mut g = Graph::new();
        let w = p.encoder.bind(&mut g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = g.constant(Tensor::randn([2, 12, 2500], 1.0, &mut rng));
        let out = m.encoder.forward(&mut g, &w, x, None).unwrap();
        assert_eq!(g.shape(out.patches.tokens), &[2, 100, 16]);
        assert_eq!(g.shape(out.register), &[2, 16]);
        let bad = g.constant(Tensor::zeros([1, 12, 2510]));
        assert!(matches!(m.encoder.forward(&mut g, &w, bad, None), Err(Error::Tokenization { .. })));
    }

    #[test]
    fn predictor_rejects_collision() {
        let (m, p) = setup();
        let mut g = Graph::new();
        let w = p.predictor.bind(&mut g, false);
        let ctx = PatchBatch {
            tokens: g.constant(Tensor::zeros([1, 3, 16])),
            positions: vec![vec![0, 1, 2]],
        };
        let out = m.predictor.predict(&mut g, &w, &ctx, &[vec![3, 4]]).unwrap();
        assert_eq!(g.shape(out), &[1, 2, 16]);
        assert!(matches!(
            m.predictor.predict(&mut g, &w, &ctx, &[vec![2, 5]]),
            Err(Error::TargetCollision(2))
        ));
    }

    #[test]
    fn param_counts_match_sets() {
        let (m, p) = setup();
        assert_eq!(p.encoder.num_elements(), count_params(&m.config));
        assert_eq!(p.predictor.num_elements(), count_predictor_params(&m.config));
        assert!(p.encoder.iter().all(|q| q.name.starts_with("encoder.")));
    }
}
