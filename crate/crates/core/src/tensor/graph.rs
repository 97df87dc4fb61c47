use rand::Rng;

use super::kernels::{matmul_nn, matmul_nt, matmul_tn};
use super::{Real, Tensor};
use crate::par::Exec;
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// `a · b` (or `a · bᵀ`) per batch; `batch == 0` means a shared right operand.
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        transpose_b: bool,
    },
    Conv1d {
        input: Var,
        kernel: Var,
        batch: usize,
        leads: usize,
        width: usize,
        patches: usize,
        channels: usize,
    },
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    Softmax {
        x: Var,
    },
    LayerNorm {
        x: Var,
        scale: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
        batch: usize,
        first: usize,
        second: usize,
        dim: usize,
    },
    Gather {
        x: Var,
        index: Vec<Vec<usize>>,
        tokens: usize,
        dim: usize,
    },
    Tile {
        x: Var,
        reps: usize,
    },
    L1 {
        pred: Var,
        target: Var,
    },
    BceWithLogits {
        logits: Var,
        labels: Vec<T>,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Tape of tensor operations supporting one or more reverse sweeps.
///
/// Nodes are appended in creation order, which is a topological order, so
/// [`Graph::backward`] is a single reverse scan. Only leaves keep gradients;
/// they accumulate across backward calls until [`Graph::zero_grad`].
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    exec: Exec,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu_parts(x: f64) -> (f64, f64) {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    (y, dy)
}

fn permuted_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    axes.iter().map(|&a| shape[a]).collect()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Moves `src` (shaped `shape`) into `dst` laid out as `shape` permuted by `axes`.
fn permute_into<T: Copy>(src: &[T], shape: &[usize], axes: &[usize], dst: &mut [T]) {
    let src_strides = strides(shape);
    let out_shape = permuted_shape(shape, axes);
    let step: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for slot in dst.iter_mut() {
        *slot = src[offset];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= step[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

fn add_into<T: Real>(acc: &mut [T], g: &[T]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self::with_exec(Exec::default_mode())
    }

    pub fn with_exec(exec: Exec) -> Self {
        Self {
            nodes: Vec::new(),
            exec,
        }
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Inserts a leaf; gradients are collected for it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Stop-gradient: a constant copy of `x`.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", "[m,k]·[k,n]", format!("{sa:?}·{sb:?}")));
        }
        self.matmul_shared(a, b, sa[0], sa[1], sb[1])
    }

    /// Applies `w: [k, n]` to the last axis of `x: [..., k]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sw.len() != 2 || sx.is_empty() || *sx.last().unwrap() != sw[0] {
            return Err(Error::shape("linear", format!("[..., {}]", sw.first().unwrap_or(&0)), format!("{sx:?}")));
        }
        let k = sw[0];
        let m = self.value(x).len() / k;
        let out = self.matmul_shared(x, w, m, k, sw[1])?;
        let mut shape = sx;
        *shape.last_mut().unwrap() = sw[1];
        self.reshape(out, shape)
    }

    fn matmul_shared(&mut self, a: Var, b: Var, m: usize, k: usize, n: usize) -> Result<Var> {
        let mut out = vec![T::zero(); m * n];
        matmul_nn(self.exec, 1, m, k, n, self.value(a).data(), self.value(b).data(), &mut out);
        let rg = self.rg(a) || self.rg(b);
        let op = Op::MatMul {
            a,
            b,
            batch: 0,
            m,
            k,
            n,
            transpose_b: false,
        };
        Ok(self.push(Tensor::new(vec![m, n], out)?, op, rg))
    }

    /// Batched `[B, m, k] · [B, k, n]`, or `[B, m, k] · [B, n, k]ᵀ` when `transpose_b`.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if transpose_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(Error::shape("bmm", "matching batch and inner dims", format!("{sa:?}·{sb:?}")));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let mut out = vec![T::zero(); batch * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        if transpose_b {
            matmul_nt(self.exec, batch, m, k, n, av, bv, &mut out);
        } else {
            matmul_nn(self.exec, batch, m, k, n, av, bv, &mut out);
        }
        let rg = self.rg(a) || self.rg(b);
        let op = Op::MatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            transpose_b,
        };
        Ok(self.push(Tensor::new(vec![batch, m, n], out)?, op, rg))
    }

    /// Non-overlapping strided convolution without bias.
    ///
    /// `input` is `[leads, T]` or `[B, leads, T]`, `kernel` is
    /// `[channels, leads, width]`; the output is `[channels, T / width]`
    /// (with a leading batch axis when the input has one).
    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize) -> Result<Var> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        let (batch, leads, t) = match si.as_slice() {
            [l, t] => (1, *l, *t),
            [b, l, t] => (*b, *l, *t),
            _ => return Err(Error::shape("conv1d", "[leads, T] or [B, leads, T]", format!("{si:?}"))),
        };
        if sk.len() != 3 || sk[1] != leads {
            return Err(Error::shape("conv1d", format!("[C, {leads}, w]"), format!("{sk:?}")));
        }
        let (channels, width) = (sk[0], sk[2]);
        if stride != width {
            return Err(Error::shape("conv1d", format!("stride {width}"), stride));
        }
        if width == 0 || t % width != 0 {
            return Err(Error::Tokenization { len: t, patch: width });
        }
        let patches = t / width;
        let lw = leads * width;
        let x = self.value(input).data();
        let kv = self.value(kernel).data();
        let mut out = vec![T::zero(); batch * channels * patches];
        let mut cols = vec![T::zero(); patches * lw];
        for b in 0..batch {
            im2col(&x[b * leads * t..(b + 1) * leads * t], leads, t, width, &mut cols);
            let dst = &mut out[b * channels * patches..(b + 1) * channels * patches];
            matmul_nt(self.exec, 1, channels, lw, patches, kv, &cols, dst);
        }
        let shape = if si.len() == 2 {
            vec![channels, patches]
        } else {
            vec![batch, channels, patches]
        };
        let rg = self.rg(input) || self.rg(kernel);
        let op = Op::Conv1d {
            input,
            kernel,
            batch,
            leads,
            width,
            patches,
            channels,
        };
        Ok(self.push(Tensor::new(shape, out)?, op, rg))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape("permute", format!("permutation of rank {}", shape.len()), format!("{axes:?}")));
        }
        let mut out = vec![T::zero(); self.value(x).len()];
        permute_into(self.value(x).data(), &shape, axes, &mut out);
        let value = Tensor::new(permuted_shape(&shape, axes), out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Permute { x, axes: axes.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?}", self.shape(a)), format!("{:?}", self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(self.shape(a).to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let factor = T::c(factor);
        let src = self.value(x);
        let v = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&e| e * factor).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(v, Op::Scale { x, factor }, rg)
    }

    /// Softmax over the last axis, max-shifted.
    pub fn softmax(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let n = src.last_dim();
        let mut out = src.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().fold(T::neg_infinity(), |m, &e| m.max(e));
            let mut total = T::zero();
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                total += *e;
            }
            for e in row.iter_mut() {
                *e /= total;
            }
        }
        let v = Tensor::new(src.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(v, Op::Softmax { x }, rg)
    }

    /// Bias-free layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, scale: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if d < 2 || self.shape(scale) != [d] {
            return Err(Error::shape("layer_norm", format!("d >= 2 and scale [{d}]"), format!("{:?}", self.shape(scale))));
        }
        let eps = T::c(eps);
        let dn = T::c(d as f64);
        let src = self.value(x).data();
        let gamma = self.value(scale).data();
        let rows = src.len() / d;
        let mut xhat = vec![T::zero(); src.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().fold(T::zero(), |a, &e| a + e) / dn;
            let var = row.iter().fold(T::zero(), |a, &e| a + (e - mean) * (e - mean)) / dn;
            let inv = T::one() / (var + eps).sqrt();
            rstd[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gamma[j];
            }
        }
        let v = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x) || self.rg(scale);
        Ok(self.push(v, Op::LayerNorm { x, scale, xhat, rstd }, rg))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&e| T::c(gelu_parts(e.f64()).0)).collect();
        let v = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(v, Op::Gelu { x }, rg)
    }

    /// Concatenates `[B, n1, d]` and `[B, n2, d]` along the token axis.
    pub fn concat_tokens(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::shape("concat_tokens", format!("[{}, _, {}]", sa.first().unwrap_or(&0), sa.last().unwrap_or(&0)), format!("{sb:?}")));
        }
        let (batch, first, second, dim) = (sa[0], sa[1], sb[1], sa[2]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(batch * (first + second) * dim);
        for i in 0..batch {
            out.extend_from_slice(&av[i * first * dim..(i + 1) * first * dim]);
            out.extend_from_slice(&bv[i * second * dim..(i + 1) * second * dim]);
        }
        let v = Tensor::new(vec![batch, first + second, dim], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Concat { a, b, batch, first, second, dim }, rg))
    }

    /// Selects tokens per batch element: `[B, T, d]` → `[B, k, d]`.
    pub fn gather_tokens(&mut self, x: Var, index: &[Vec<usize>]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || index.len() != sx[0] {
            return Err(Error::shape("gather_tokens", format!("{} index rows for {sx:?}", sx.first().unwrap_or(&0)), index.len()));
        }
        let (tokens, dim) = (sx[1], sx[2]);
        let k = index.first().map_or(0, Vec::len);
        if index.iter().any(|row| row.len() != k) {
            return Err(Error::shape("gather_tokens", "equal index counts", "ragged index"));
        }
        if let Some(&bad) = index.iter().flatten().find(|&&i| i >= tokens) {
            return Err(Error::shape("gather_tokens", format!("index < {tokens}"), bad));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(sx[0] * k * dim);
        for (b, row) in index.iter().enumerate() {
            for &t in row {
                let at = (b * tokens + t) * dim;
                out.extend_from_slice(&src[at..at + dim]);
            }
        }
        let v = Tensor::new(vec![sx[0], k, dim], out)?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Gather { x, index: index.to_vec(), tokens, dim }, rg))
    }

    /// Stacks `reps` copies of `x` along a new leading axis.
    pub fn tile(&mut self, x: Var, reps: usize) -> Var {
        let src = self.value(x);
        let mut shape = vec![reps];
        shape.extend_from_slice(src.shape());
        let data = src.data().repeat(reps);
        let v = Tensor::new(shape, data).expect("tile shape");
        let rg = self.rg(x);
        self.push(v, Op::Tile { x, reps }, rg)
    }

    /// Mean absolute error. `target` must be gradient-free.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("l1_loss", pred, target)?;
        if self.rg(target) {
            return Err(Error::TargetRequiresGrad);
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let n = p.len().max(1);
        let total = p.iter().zip(t).fold(0.0f64, |acc, (&a, &b)| acc + (a - b).abs().f64());
        let v = Tensor::scalar(T::c(total / n as f64));
        let rg = self.rg(pred);
        Ok(self.push(v, Op::L1 { pred, target }, rg))
    }

    /// Mean binary cross-entropy between `logits` and 0/1 `labels`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let z = self.value(logits).data();
        if z.len() != labels.len() {
            return Err(Error::shape("bce_with_logits", z.len(), labels.len()));
        }
        let total = z.iter().zip(labels).fold(0.0f64, |acc, (&zi, &yi)| {
            let (zi, yi) = (zi.f64(), yi.f64());
            acc + zi.max(0.0) - zi * yi + (-zi.abs()).exp().ln_1p()
        });
        let v = Tensor::scalar(T::c(total / z.len().max(1) as f64));
        let rg = self.rg(logits);
        Ok(self.push(v, Op::BceWithLogits { logits, labels: labels.to_vec() }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().fold(T::zero(), |a, &e| a + e);
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let src = self.value(x).data();
        let total = src.iter().fold(T::zero(), |a, &e| a + e);
        let v = Tensor::scalar(total / T::c(src.len().max(1) as f64));
        let rg = self.rg(x);
        self.push(v, Op::Mean { x }, rg)
    }

    /// Inverted dropout; the identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = T::c(1.0 / (1.0 - p));
        let src = self.value(x);
        let mask: Vec<T> = (0..src.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(&e, &m)| e * m).collect();
        let v = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(v, Op::Dropout { x, mask }, rg)
    }

    /// Reverse sweep from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaf_grads = Vec::new();

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                leaf_grads.push((id, g));
                continue;
            }
            for (parent, pg) in self.vjp(id, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => add_into(acc, &pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }

        for (id, g) in leaf_grads {
            match &mut self.nodes[id].grad {
                Some(acc) => add_into(acc, &g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `id` for its differentiable parents.
    fn vjp(&self, id: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[id];
        let exec = self.exec;
        let val = |v: Var| self.nodes[v.0].value.data();
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            &Op::MatMul { a, b, batch, m, k, n, transpose_b } => {
                let mut out = Vec::new();
                let shared = batch == 0;
                let bt = batch.max(1);
                if rg(a) {
                    let mut da = vec![T::zero(); bt * m * k];
                    if transpose_b {
                        matmul_nn(exec, bt, m, n, k, g, val(b), &mut da);
                    } else {
                        matmul_nt(exec, bt, m, n, k, g, val(b), &mut da);
                    }
                    out.push((a, da));
                }
                if rg(b) {
                    let db = if transpose_b {
                        let mut db = vec![T::zero(); bt * n * k];
                        matmul_tn(exec, bt, m, n, k, g, val(a), &mut db);
                        db
                    } else {
                        let mut db = vec![T::zero(); bt * k * n];
                        matmul_tn(exec, bt, m, k, n, val(a), g, &mut db);
                        db
                    };
                    debug_assert!(!shared || db.len() == k * n);
                    out.push((b, db));
                }
                out
            }
            &Op::Conv1d { input, kernel, batch, leads, width, patches, channels } => {
                let lw = leads * width;
                let t = patches * width;
                let x = val(input);
                let kv = val(kernel);
                let mut dk = if rg(kernel) { Some(vec![T::zero(); channels * lw]) } else { None };
                let mut dx = if rg(input) { Some(vec![T::zero(); batch * leads * t]) } else { None };
                let mut cols = vec![T::zero(); patches * lw];
                let mut tmp = vec![T::zero(); channels * lw];
                for b in 0..batch {
                    let gy = &g[b * channels * patches..(b + 1) * channels * patches];
                    if let Some(dk) = dk.as_mut() {
                        im2col(&x[b * leads * t..(b + 1) * leads * t], leads, t, width, &mut cols);
                        matmul_nn(exec, 1, channels, patches, lw, gy, &cols, &mut tmp);
                        add_into(dk, &tmp);
                    }
                    if let Some(dx) = dx.as_mut() {
                        let mut dcols = vec![T::zero(); patches * lw];
                        matmul_tn(exec, 1, channels, patches, lw, gy, kv, &mut dcols);
                        col2im(&dcols, leads, t, width, &mut dx[b * leads * t..(b + 1) * leads * t]);
                    }
                }
                let mut out = Vec::new();
                if let Some(dx) = dx {
                    out.push((input, dx));
                }
                if let Some(dk) = dk {
                    out.push((kernel, dk));
                }
                out
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let out_shape = node.value.shape();
                let mut dx = vec![T::zero(); g.len()];
                permute_into(g, out_shape, &inverse, &mut dx);
                vec![(*x, dx)]
            }
            &Op::Reshape { x } => vec![(x, g.to_vec())],
            &Op::Add { a, b } => vec![(a, g.to_vec()), (b, g.to_vec())],
            &Op::Sub { a, b } => vec![(a, g.to_vec()), (b, g.iter().map(|&e| -e).collect())],
            &Op::Mul { a, b } => {
                let (av, bv) = (val(a), val(b));
                vec![
                    (a, g.iter().zip(bv).map(|(&e, &y)| e * y).collect()),
                    (b, g.iter().zip(av).map(|(&e, &y)| e * y).collect()),
                ]
            }
            &Op::Scale { x, factor } => vec![(x, g.iter().map(|&e| e * factor).collect())],
            &Op::Softmax { x } => {
                let y = node.value.data();
                let n = node.value.last_dim();
                let mut dx = vec![T::zero(); g.len()];
                for ((dxr, yr), gr) in dx.chunks_mut(n).zip(y.chunks(n)).zip(g.chunks(n)) {
                    let s = yr.iter().zip(gr).fold(T::zero(), |a, (&yi, &gi)| a + yi * gi);
                    for j in 0..n {
                        dxr[j] = yr[j] * (gr[j] - s);
                    }
                }
                vec![(x, dx)]
            }
            Op::LayerNorm { x, scale, xhat, rstd } => {
                let gamma = val(*scale);
                let d = gamma.len();
                let dn = T::c(d as f64);
                let mut dgamma = vec![T::zero(); d];
                let mut dx = vec![T::zero(); g.len()];
                for (r, &inv) in rstd.iter().enumerate() {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for j in 0..d {
                        dgamma[j] += gr[j] * hr[j];
                        let dh = gr[j] * gamma[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= dn;
                    mean_dh_h /= dn;
                    for j in 0..d {
                        let dh = gr[j] * gamma[j];
                        dx[r * d + j] = inv * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                vec![(*x, dx), (*scale, dgamma)]
            }
            &Op::Gelu { x } => {
                let dx = g.iter().zip(val(x)).map(|(&e, &xi)| e * T::c(gelu_parts(xi.f64()).1)).collect();
                vec![(x, dx)]
            }
            &Op::Concat { a, b, batch, first, second, dim } => {
                let mut ga = Vec::with_capacity(batch * first * dim);
                let mut gb = Vec::with_capacity(batch * second * dim);
                let per = (first + second) * dim;
                for i in 0..batch {
                    ga.extend_from_slice(&g[i * per..i * per + first * dim]);
                    gb.extend_from_slice(&g[i * per + first * dim..(i + 1) * per]);
                }
                vec![(a, ga), (b, gb)]
            }
            Op::Gather { x, index, tokens, dim } => {
                let (tokens, dim) = (*tokens, *dim);
                let mut dx = vec![T::zero(); index.len() * tokens * dim];
                let k = index.first().map_or(0, Vec::len);
                for (b, row) in index.iter().enumerate() {
                    for (slot, &t) in row.iter().enumerate() {
                        let src = &g[(b * k + slot) * dim..(b * k + slot + 1) * dim];
                        add_into(&mut dx[(b * tokens + t) * dim..(b * tokens + t + 1) * dim], src);
                    }
                }
                vec![(*x, dx)]
            }
            &Op::Tile { x, reps } => {
                let n = g.len() / reps.max(1);
                let mut dx = vec![T::zero(); n];
                for chunk in g.chunks(n.max(1)) {
                    add_into(&mut dx, chunk);
                }
                vec![(x, dx)]
            }
            &Op::L1 { pred, target } => {
                let scale = g[0] / T::c(val(pred).len().max(1) as f64);
                let dp = val(pred)
                    .iter()
                    .zip(val(target))
                    .map(|(&p, &t)| {
                        let d = p - t;
                        if d > T::zero() {
                            scale
                        } else if d < T::zero() {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                vec![(pred, dp)]
            }
            Op::BceWithLogits { logits, labels } => {
                let scale = g[0] / T::c(labels.len().max(1) as f64);
                let dz = val(*logits)
                    .iter()
                    .zip(labels)
                    .map(|(&z, &y)| (sigmoid(z) - y) * scale)
                    .collect();
                vec![(*logits, dz)]
            }
            &Op::Sum { x } => vec![(x, vec![g[0]; val(x).len()])],
            &Op::Mean { x } => {
                let n = val(x).len().max(1);
                vec![(x, vec![g[0] / T::c(n as f64); n])]
            }
            Op::Dropout { x, mask } => vec![(*x, g.iter().zip(mask).map(|(&e, &m)| e * m).collect())],
        }
    }
}

pub(crate) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `[leads, T]` → `[T / width, leads * width]` patch rows.
fn im2col<T: Real>(x: &[T], leads: usize, t: usize, width: usize, cols: &mut [T]) {
    let patches = t / width;
    let lw = leads * width;
    for p in 0..patches {
        for l in 0..leads {
            let src = &x[l * t + p * width..l * t + (p + 1) * width];
            cols[p * lw + l * width..p * lw + (l + 1) * width].copy_from_slice(src);
        }
    }
}

fn col2im<T: Real>(cols: &[T], leads: usize, t: usize, width: usize, dx: &mut [T]) {
    let patches = t / width;
    let lw = leads * width;
    for p in 0..patches {
        for l in 0..leads {
            let src = &cols[p * lw + l * width..p * lw + (l + 1) * width];
            add_into(&mut dx[l * t + p * width..l * t + (p + 1) * width], src);
        }
    }
}
