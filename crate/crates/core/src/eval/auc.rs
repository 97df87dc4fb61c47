use crate::{Error, Result};

/// Area under the ROC curve from midranks (ties count one half). `None`
/// unless both classes are present.
pub fn binary_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] != 0).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean per-class AUC over `[records][classes]` matrices, skipping classes
/// that lack positives or negatives.
pub fn macro_auc(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("macro_auc", scores.len(), labels.len()));
    }
    let classes = labels.first().map_or(0, Vec::len);
    let mut total = 0.0;
    let mut scored = 0usize;
    for c in 0..classes {
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let l: Vec<u8> = labels.iter().map(|r| r[c]).collect();
        if let Some(a) = binary_auc(&s, &l) {
            total += a;
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(Error::NoScoreableClass);
    }
    Ok(total / scored as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        assert_eq!(binary_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), Some(0.75));
        assert_eq!(binary_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), Some(1.0));
        assert_eq!(binary_auc(&[0.5, 0.5], &[0, 1]), Some(0.5));
        assert_eq!(binary_auc(&[0.5, 0.5], &[1, 1]), None);
    }

    #[test]
    fn skips_unscoreable_classes() {
        let s = vec![vec![0.1, 0.3], vec![0.9, 0.2]];
        let l = vec![vec![0, 1], vec![1, 1]];
        assert_eq!(macro_auc(&s, &l).unwrap(), 1.0);
        assert!(matches!(macro_auc(&s, &[vec![1, 1], vec![1, 1]]), Err(Error::NoScoreableClass)));
    }
}
