use rand::Rng;

use super::config::Pooling;
use crate::model::{DropoutCtx, Encoded, ParamKind, ParamSet};
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::Result;

const HEAD_STD: f64 = 0.02;

/// Bias-free classification head over encoder outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead<T> {
    pub pooling: Pooling,
    pub params: ParamSet<T>,
}

impl<T: Real> ClassifierHead<T> {
    /// Attention pooling stores `query`, `key`, `value` and `out`; register
    /// pooling stores only `out`.
    pub fn new<R: Rng + ?Sized>(pooling: Pooling, dim: usize, classes: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        if pooling == Pooling::Attention {
            params.push("head.query", ParamKind::Token, Tensor::randn([dim], HEAD_STD, rng));
            params.push("head.key.weight", ParamKind::Linear, Tensor::randn([dim, dim], HEAD_STD, rng));
            params.push("head.value.weight", ParamKind::Linear, Tensor::randn([dim, dim], HEAD_STD, rng));
        }
        params.push("head.out.weight", ParamKind::Linear, Tensor::randn([dim, classes], HEAD_STD, rng));
        Self { pooling, params }
    }

    pub fn classes(&self) -> usize {
        self.params.get(self.params.len() - 1).value.last_dim()
    }

    /// Logits `[B, classes]`.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        w: &[Var],
        enc: &Encoded,
        dropout: Option<DropoutCtx<'_>>,
    ) -> Result<Var> {
        let pooled = match self.pooling {
            Pooling::Register => enc.register,
            Pooling::Attention => {
                let x = enc.patches.tokens;
                let (b, d) = (g.shape(x)[0], g.shape(x)[2]);
                let k = g.linear(x, w[1])?;
                let v = g.linear(x, w[2])?;
                let q = g.tile(w[0], b);
                let q = g.reshape(q, [b, 1, d])?;
                let s = g.bmm(q, k, true)?;
                let s = g.scale(s, 1.0 / (d as f64).sqrt());
                let a = g.softmax(s);
                let o = g.bmm(a, v, false)?;
                g.reshape(o, [b, d])?
            }
        };
        let pooled = match dropout {
            Some(c) if c.p > 0.0 => g.dropout(pooled, c.p, c.rng),
            _ => pooled,
        };
        g.linear(pooled, w[w.len() - 1])
    }
}
