//! Correlation metrics between predicted scores and ground truth.
//!
//! Degenerate predictor scores (`-inf`) are accepted and rank below every
//! finite score. Every metric returns `None` when it is undefined (a
//! constant vector, mismatched lengths, fewer than two points, NaN input).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Scalar;

/// Rounding step applied to ground truth by sparse Kendall tau.
pub const DEFAULT_SPARSE_RESOLUTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Pearson,
    Spearman,
    KendallTau,
    SparseKendallTau,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Pearson, MetricKind::Spearman, MetricKind::KendallTau, MetricKind::SparseKendallTau];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Pearson => "pearson",
            MetricKind::Spearman => "spearman",
            MetricKind::KendallTau => "kendall_tau",
            MetricKind::SparseKendallTau => "sparse_kendall_tau",
        }
    }

    /// `scores` against `truth`.
    pub fn compute(self, scores: &[f64], truth: &[f64]) -> Option<f64> {
        match self {
            MetricKind::Pearson => pearson(scores, truth),
            MetricKind::Spearman => spearman(scores, truth),
            MetricKind::KendallTau => kendall_tau(scores, truth),
            MetricKind::SparseKendallTau => sparse_kendall_tau(scores, truth, DEFAULT_SPARSE_RESOLUTION),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric '{s}'")))
    }
}

fn usable<T: Scalar>(x: &[T], y: &[T]) -> bool {
    x.len() == y.len() && x.len() >= 2 && !x.iter().chain(y).any(|v| v.is_nan() || *v == T::infinity())
}

/// Replaces `-inf` sentinels by a value below every finite entry.
fn floor_sentinels<T: Scalar>(x: &[T]) -> Vec<T> {
    let finite = x.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return x.to_vec();
    }
    let floor = lo - (hi - lo).max(T::one());
    x.iter().map(|&v| if v.is_finite() { v } else { floor }).collect()
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    if !usable(x, y) {
        return None;
    }
    let (x, y) = (floor_sentinels(x), floor_sentinels(y));
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return None;
    }
    let n = T::of(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied entries share their average rank.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && cmp(x[idx[j]], x[idx[i]]) == Ordering::Equal {
            j += 1;
        }
        let r = T::of((i + j + 1) as f64 / 2.0);
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    if !usable(x, y) {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[inline]
fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("NaN filtered")
}

/// Kendall tau-b (tie corrected), O(n log n).
pub fn kendall_tau<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    if !usable(x, y) {
        return None;
    }
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then_with(|| cmp(y[a], y[b])));

    let pairs = |len: i64| len * (len - 1) / 2;
    let n0 = pairs(n as i64);
    let (mut ties_x, mut ties_xy) = (0i64, 0i64);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && cmp(x[idx[j]], x[idx[i]]) == Ordering::Equal {
            j += 1;
        }
        ties_x += pairs((j - i) as i64);
        let mut k = i;
        while k < j {
            let mut m = k + 1;
            while m < j && cmp(y[idx[m]], y[idx[k]]) == Ordering::Equal {
                m += 1;
            }
            ties_xy += pairs((m - k) as i64);
            k = m;
        }
        i = j;
    }

    // discordant pairs = inversions of y in x-order
    let mut ys: Vec<T> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0i64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && cmp(ys[j], ys[i]) == Ordering::Equal {
            j += 1;
        }
        ties_y += pairs((j - i) as i64);
        i = j;
    }
    let (dx, dy) = (n0 - ties_x, n0 - ties_y);
    if dx == 0 || dy == 0 {
        return None;
    }
    let num = n0 - ties_x - ties_y + ties_xy - 2 * swaps;
    Some(T::of(num as f64 / (dx as f64 * dy as f64).sqrt()))
}

/// Sorts `v` ascending, returning the number of strict inversions.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut [T]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b after rounding `truth` to multiples of `resolution`.
pub fn sparse_kendall_tau<T: Scalar>(scores: &[T], truth: &[T], resolution: T) -> Option<T> {
    if !(resolution > T::zero()) {
        return kendall_tau(scores, truth);
    }
    let rounded: Vec<T> = truth.iter().map(|&v| (v / resolution).round() * resolution).collect();
    kendall_tau(scores, &rounded)
}
