//! Contiguous-block masking over a 1-D patch sequence.
//!
//! Each batch element starts with one unmasked block covering all patches.
//! A block is drawn uniformly from the list, a segment of it is masked and the
//! 0, 1 or 2 unmasked fragments replace it, until exactly `k` patches are
//! masked. `k` is shared by the whole batch so context and target sets have
//! uniform shapes.

use rand::Rng;

use crate::model::PatchBatch;
use crate::tensor::{Graph, Real};
use crate::{Error, Result};

pub const MIN_PATCHES: usize = 20;
pub const DEFAULT_RATIO: (f64, f64) = (0.75, 0.85);
pub const MIN_BLOCK_FRACTION: f64 = 0.05;

/// Masked and context index sets for one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    pub num_patches: usize,
    pub target_count: usize,
    pub masked: Vec<Vec<usize>>,
    pub context: Vec<Vec<usize>>,
}

impl MaskSpec {
    /// Builds a spec from explicit masked sets, which must all have the same size.
    pub fn from_masked(num_patches: usize, masked: Vec<Vec<usize>>) -> Result<Self> {
        let k = masked.first().map_or(0, Vec::len);
        let mut context = Vec::with_capacity(masked.len());
        let mut sorted_masked = Vec::with_capacity(masked.len());
        for mut m in masked {
            m.sort_unstable();
            m.dedup();
            if m.len() != k {
                return Err(Error::Mask("masked sets must have equal, duplicate-free sizes".into()));
            }
            if m.last().is_some_and(|&i| i >= num_patches) {
                return Err(Error::Mask(format!("masked index out of range 0..{num_patches}")));
            }
            let mut is_masked = vec![false; num_patches];
            m.iter().for_each(|&i| is_masked[i] = true);
            context.push((0..num_patches).filter(|&i| !is_masked[i]).collect());
            sorted_masked.push(m);
        }
        Ok(Self {
            num_patches,
            target_count: k,
            masked: sorted_masked,
            context,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.masked.len()
    }

    pub fn ratio(&self) -> f64 {
        self.target_count as f64 / self.num_patches as f64
    }
}

/// Sorted, non-overlapping unmasked runs as `(start, len)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockList {
    blocks: Vec<(usize, usize)>,
}

impl BlockList {
    pub fn full(num_patches: usize) -> Self {
        Self {
            blocks: vec![(0, num_patches)],
        }
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn unmasked(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    /// Masks `[start + offset, start + offset + len)` of block `i` and returns
    /// the number of fragments left behind.
    pub fn mask_segment(&mut self, i: usize, offset: usize, len: usize) -> usize {
        let (start, block_len) = self.blocks[i];
        assert!(len >= 1 && offset + len <= block_len, "segment outside block");
        let mut rest = Vec::with_capacity(2);
        if offset > 0 {
            rest.push((start, offset));
        }
        if offset + len < block_len {
            rest.push((start + offset + len, block_len - offset - len));
        }
        let produced = rest.len();
        self.blocks.splice(i..=i, rest);
        produced
    }
}

/// Smallest allowed masked run, `max(1, ceil(0.05 N))`.
pub fn min_block_len(num_patches: usize) -> usize {
    ((MIN_BLOCK_FRACTION * num_patches as f64 - 1e-9).ceil() as usize).max(1)
}

/// Inclusive range of admissible masked counts for a ratio interval.
pub fn target_bounds(num_patches: usize, ratio: (f64, f64)) -> (usize, usize) {
    let n = num_patches as f64;
    ((ratio.0 * n - 1e-9).ceil() as usize, (ratio.1 * n + 1e-9).floor() as usize)
}

/// Samples a batch-uniform mask with the default 75-85% ratio.
pub fn sample_mask<R: Rng + ?Sized>(num_patches: usize, batch_size: usize, rng: &mut R) -> Result<MaskSpec> {
    sample_mask_with(num_patches, batch_size, DEFAULT_RATIO, rng)
}

pub fn sample_mask_with<R: Rng + ?Sized>(
    num_patches: usize,
    batch_size: usize,
    ratio: (f64, f64),
    rng: &mut R,
) -> Result<MaskSpec> {
    if num_patches < MIN_PATCHES {
        return Err(Error::Mask(format!("need at least {MIN_PATCHES} patches, got {num_patches}")));
    }
    if !(0.0 < ratio.0 && ratio.0 <= ratio.1 && ratio.1 < 1.0) {
        return Err(Error::Mask(format!("invalid mask ratio range {ratio:?}")));
    }
    let (lo, hi) = target_bounds(num_patches, ratio);
    if lo > hi {
        return Err(Error::Mask(format!("no integer count in ratio range for {num_patches} patches")));
    }
    let r = if ratio.0 == ratio.1 { ratio.0 } else { rng.random_range(ratio.0..=ratio.1) };
    let k = ((r * num_patches as f64).round() as usize).clamp(lo, hi);
    let min_block = min_block_len(num_patches);
    let masked = (0..batch_size)
        .map(|_| mask_element(num_patches, k, min_block, rng).0)
        .collect();
    MaskSpec::from_masked(num_patches, masked)
}

/// Masks exactly `k` of `n` patches. Returns the sorted masked indices and
/// how many updates split a block into two fragments.
///
/// Blocks shorter than `min_block` are masked whole; they always border an
/// earlier masked segment, so no isolated short run is created. A final
/// segment trimmed to hit `k` is placed against a masked neighbour for the
/// same reason.
pub fn mask_element<R: Rng + ?Sized>(n: usize, k: usize, min_block: usize, rng: &mut R) -> (Vec<usize>, usize) {
    assert!(k <= n);
    let mut list = BlockList::full(n);
    let mut is_masked = vec![false; n];
    let mut done = 0;
    let mut splits = 0;
    while done < k {
        let i = rng.random_range(0..list.blocks.len());
        let (start, block_len) = list.blocks[i];
        let remaining = k - done;
        let lo = min_block.min(block_len);
        let drawn = rng.random_range(lo..=block_len);
        let len = drawn.min(remaining);
        let offset = if len < min_block && len < block_len {
            // trimmed: hug a masked neighbour
            if start > 0 && is_masked[start - 1] {
                0
            } else {
                block_len - len
            }
        } else {
            rng.random_range(0..=block_len - len)
        };
        is_masked[start + offset..start + offset + len].iter_mut().for_each(|m| *m = true);
        if list.mask_segment(i, offset, len) == 2 {
            splits += 1;
        }
        done += len;
    }
    ((0..n).filter(|&i| is_masked[i]).collect(), splits)
}

/// Splits tokens into the context batch (unmasked tokens in temporal order,
/// original positions kept), the untouched full batch and the target
/// positions.
pub fn split_by_mask<T: Real>(
    g: &mut Graph<T>,
    tokens: &PatchBatch,
    spec: &MaskSpec,
) -> Result<(PatchBatch, PatchBatch, Vec<Vec<usize>>)> {
    let n = g.shape(tokens.tokens).get(1).copied().unwrap_or(0);
    if spec.num_patches != n || spec.batch_size() != tokens.positions.len() {
        return Err(Error::Mask(format!(
            "spec covers {}x{} patches, tokens are {}x{n}",
            spec.batch_size(),
            spec.num_patches,
            tokens.positions.len()
        )));
    }
    let context_tokens = g.gather_tokens(tokens.tokens, &spec.context)?;
    let positions = spec
        .context
        .iter()
        .zip(&tokens.positions)
        .map(|(ctx, pos)| ctx.iter().map(|&i| pos[i]).collect())
        .collect();
    let targets = spec
        .masked
        .iter()
        .zip(&tokens.positions)
        .map(|(m, pos)| m.iter().map(|&i| pos[i]).collect())
        .collect();
    Ok((
        PatchBatch {
            tokens: context_tokens,
            positions,
        },
        tokens.clone(),
        targets,
    ))
}

/// Maximal runs of consecutive indices in a sorted list, as `(start, len)`.
pub fn runs(sorted: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &i in sorted {
        match out.last_mut() {
            Some((s, l)) if *s + *l == i => *l += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}
