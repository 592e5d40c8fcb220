//! Clustering and unmixing quality measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub purity: f64,
    pub entropy: f64,
    pub nmi: f64,
}

/// Purity, entropy and NMI of `pred` against `truth`, labels in `0..k`.
///
/// Uses `0 log 0 = 0`; NMI is 0 when both partitions have zero entropy;
/// entropy is 0 when `k = 1`.
pub fn clustering_metrics(pred: &[usize], truth: &[usize], k: usize) -> Result<ClusterMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::BadLabels(format!("{} predicted labels vs {} true labels", pred.len(), truth.len())));
    }
    if pred.is_empty() || k == 0 {
        return Err(Error::BadLabels("no labels".into()));
    }
    if let Some(bad) = pred.iter().chain(truth).find(|&&l| l >= k) {
        return Err(Error::BadLabels(format!("label {bad} outside 0..{k}")));
    }
    let n = pred.len() as f64;
    // counts[i][j]: truth class i, predicted cluster j
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[t][p] += 1;
    }
    let true_sizes: Vec<f64> = counts.iter().map(|row| row.iter().sum::<usize>() as f64).collect();
    let pred_sizes: Vec<f64> = (0..k).map(|j| counts.iter().map(|row| row[j]).sum::<usize>() as f64).collect();

    let purity = (0..k).map(|j| counts.iter().map(|row| row[j]).max().unwrap_or(0)).sum::<usize>() as f64 / n;

    let mut cond = 0.0;
    let mut mutual = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            cond -= c * (c / pred_sizes[j]).log2();
            mutual += c / n * (n * c / (true_sizes[i] * pred_sizes[j])).log2();
        }
    }
    let entropy = if k > 1 { cond / (n * (k as f64).log2()) } else { 0.0 };
    let h = |sizes: &[f64]| -> f64 {
        sizes.iter().filter(|&&s| s > 0.0).map(|&s| -(s / n) * (s / n).log2()).sum()
    };
    let denom = h(&true_sizes).max(h(&pred_sizes));
    let nmi = if denom > 0.0 { (mutual / denom).clamp(0.0, 1.0) } else { 0.0 };
    Ok(ClusterMetrics { purity, entropy: entropy.max(0.0), nmi })
}

/// Mean spectral angle between matched columns of `estimate` and `truth`.
///
/// Columns are paired greedily by smallest angle.
pub fn sad(estimate: &Mat, truth: &Mat) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", estimate.shape(), truth.shape())));
    }
    let k = truth.ncols();
    for (m, _) in [(estimate, 0), (truth, 1)] {
        if let Some(col) = (0..k).find(|&j| m.column(j).norm() == 0.0) {
            return Err(Error::ZeroColumn { col });
        }
    }
    let mut angles = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            let (ea, tb) = (estimate.column(a), truth.column(b));
            let cos = (ea.dot(&tb) / (ea.norm() * tb.norm())).clamp(-1.0, 1.0);
            angles.push((cos.acos(), a, b));
        }
    }
    angles.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_e = vec![false; k];
    let mut used_t = vec![false; k];
    let mut total = 0.0;
    for (angle, a, b) in angles {
        if !used_e[a] && !used_t[b] {
            used_e[a] = true;
            used_t[b] = true;
            total += angle;
        }
    }
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_match() {
        let l = [0, 0, 1, 2, 2, 1];
        let m = clustering_metrics(&l, &l, 3).unwrap();
        assert_eq!(m.purity, 1.0);
        assert_eq!(m.entropy, 0.0);
        assert!((m.nmi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn crossed_halves() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 0, 1];
        let m = clustering_metrics(&pred, &truth, 2).unwrap();
        assert_eq!(m.purity, 0.5);
        assert!((m.entropy - 1.0).abs() < 1e-15);
        assert!(m.nmi.abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_bad_inputs() {
        let m = clustering_metrics(&[0, 0], &[0, 0], 1).unwrap();
        assert_eq!((m.purity, m.entropy, m.nmi), (1.0, 0.0, 0.0));
        assert!(clustering_metrics(&[0], &[0, 1], 2).is_err());
        assert!(clustering_metrics(&[2], &[0], 2).is_err());
    }

    #[test]
    fn sad_examples() {
        let y = Mat::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0]);
        assert!(sad(&y, &y).unwrap().abs() < 1e-7);
        assert!(sad(&(&y * 2.0), &y).unwrap().abs() < 1e-7);
        let a = Mat::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = Mat::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((sad(&a, &b).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        // column order does not matter
        let swapped = Mat::from_columns(&[y.column(1), y.column(0)]);
        assert!(sad(&swapped, &y).unwrap().abs() < 1e-7);
        assert!(matches!(sad(&Mat::zeros(2, 1), &a), Err(Error::ZeroColumn { col: 0 })));
    }

    proptest! {
        #[test]
        fn relabeling_invariance(labels in proptest::collection::vec((0usize..3, 0usize..3), 1..40), perm in Just([2usize, 0, 1])) {
            let pred: Vec<usize> = labels.iter().map(|l| l.0).collect();
            let truth: Vec<usize> = labels.iter().map(|l| l.1).collect();
            let relabeled: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            let a = clustering_metrics(&pred, &truth, 3).unwrap();
            let b = clustering_metrics(&relabeled, &truth, 3).unwrap();
            prop_assert!((a.purity - b.purity).abs() < 1e-12);
            prop_assert!((a.entropy - b.entropy).abs() < 1e-12);
            prop_assert!((a.nmi - b.nmi).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.nmi) && (0.0..=1.0 + 1e-12).contains(&a.entropy));
            // entropy vanishes exactly when every predicted cluster is pure
            let pure = (0..3).all(|j| {
                let mut cls = labels.iter().filter(|l| l.0 == j).map(|l| l.1);
                match cls.next() { Some(c) => cls.all(|d| d == c), None => true }
            });
            prop_assert_eq!(a.entropy == 0.0, pure);
        }
    }
}
