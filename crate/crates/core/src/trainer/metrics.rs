use nalgebra::{DMatrix, SymmetricEigen};

/// Representation-collapse diagnostics over a set of embeddings.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CollapseMetrics {
    /// Mean over dimensions of the per-dimension population standard deviation.
    pub mean_std: f64,
    /// `exp` of the entropy of the normalized covariance spectrum; ranges over [1, dim].
    pub eff_rank: f64,
}

/// `rows` is a row-major `[n, dim]` matrix of embeddings.
pub fn collapse_metrics(rows: &[f64], dim: usize) -> CollapseMetrics {
    let n = if dim == 0 { 0 } else { rows.len() / dim };
    if n == 0 {
        return CollapseMetrics::default();
    }
    let mut mean = vec![0.0; dim];
    for r in rows.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i * dim + j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let mean_std = (0..dim).map(|j| cov[(j, j)].max(0.0).sqrt()).sum::<f64>() / dim as f64;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let total: f64 = eig.iter().map(|l| l.max(0.0)).sum();
    let eff_rank = if total <= 0.0 {
        0.0
    } else {
        let h: f64 = eig
            .iter()
            .map(|l| l.max(0.0) / total)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        h.exp()
    };
    CollapseMetrics { mean_std, eff_rank }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_are_collapsed() {
        let rows: Vec<f64> = (0..10).flat_map(|_| [1.0, -2.0, 3.0]).collect();
        let m = collapse_metrics(&rows, 3);
        assert_eq!(m.mean_std, 0.0);
        assert_eq!(m.eff_rank, 0.0);
    }

    #[test]
    fn isotropic_rank_is_full() {
        // ±e_j rows: covariance is a multiple of the identity.
        let dim = 4;
        let mut rows = Vec::new();
        for j in 0..dim {
            for s in [1.0, -1.0] {
                let mut r = vec![0.0; dim];
                r[j] = s;
                rows.extend(r);
            }
        }
        let m = collapse_metrics(&rows, dim);
        assert!((m.eff_rank - 4.0).abs() < 1e-9);
    }
}
