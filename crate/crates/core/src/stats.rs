//! Order statistics and summary helpers shared by preprocessing and reporting.

use serde::{Deserialize, Serialize};

/// 1-based nearest rank `⌈q·n⌉`, clamped to `[1, n]`.
///
/// `q·n` is nudged down by a few ulps before the ceiling so that products like
/// `0.999 * 10000` that land a hair above an integer are not pushed to the
/// next rank.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    assert!(n > 0, "nearest_rank on empty sample");
    let x = q * n as f64;
    let rank = (x - x.abs() * 4.0 * f64::EPSILON).ceil();
    (rank.max(1.0) as usize).min(n)
}

/// Nearest-rank quantile of an ascending-sorted slice.
pub fn nearest_rank_sorted(sorted: &[f64], q: f64) -> f64 {
    sorted[nearest_rank(q, sorted.len()) - 1]
}

/// Linearly interpolated quantile (the `(n-1)·q` convention) of a sorted slice.
pub fn interpolated_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by n).
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Tukey box-plot summary. Quartiles are linearly interpolated; whiskers
/// reach the most extreme data within 1.5·IQR of the box, and never end
/// inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        let q1 = interpolated_sorted(&s, 0.25);
        let median = interpolated_sorted(&s, 0.5);
        let q3 = interpolated_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let mut inside = s.iter().copied().filter(|v| *v >= fence_lo && *v <= fence_hi);
        let whisker_low = inside.clone().next().map_or(q1, |v| v.min(q1));
        let whisker_high = inside.next_back().map_or(q3, |v| v.max(q3));
        let outliers = s
            .iter()
            .copied()
            .filter(|v| *v < fence_lo || *v > fence_hi)
            .collect();
        Some(Self {
            count: s.len(),
            median,
            q1,
            q3,
            whisker_low,
            whisker_high,
            outliers,
        })
    }
}

/// Average ranks (1-based), ties share the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` for fewer than two points or a constant
/// input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
