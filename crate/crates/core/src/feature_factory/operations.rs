//! Scalar summaries of a numeric series.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationId {
    Mean,
    Std,
    Min,
    Max,
    Q1,
    Q2,
    Q3,
    Mad,
    Skew,
    Kurt,
}

impl OperationId {
    pub const ALL: [OperationId; 10] = [
        OperationId::Mean,
        OperationId::Std,
        OperationId::Min,
        OperationId::Max,
        OperationId::Q1,
        OperationId::Q2,
        OperationId::Q3,
        OperationId::Mad,
        OperationId::Skew,
        OperationId::Kurt,
    ];

    /// Shortest series the operation is defined on.
    pub fn min_len(self) -> usize {
        match self {
            OperationId::Std => 2,
            OperationId::Skew => 3,
            OperationId::Kurt => 4,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperationId::Mean => "mean",
            OperationId::Std => "std",
            OperationId::Min => "min",
            OperationId::Max => "max",
            OperationId::Q1 => "q1",
            OperationId::Q2 => "q2",
            OperationId::Q3 => "q3",
            OperationId::Mad => "mad",
            OperationId::Skew => "skew",
            OperationId::Kurt => "kurt",
        }
    }
}

impl fmt::Display for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Applies `op`; `None` when the series is shorter than [`OperationId::min_len`].
pub fn apply_operation<T: Scalar>(xs: &[T], op: OperationId) -> Option<T> {
    if xs.len() < op.min_len() {
        return None;
    }
    Some(match op {
        OperationId::Mean => mean(xs),
        OperationId::Std => std_dev(xs),
        OperationId::Min => xs.iter().copied().fold(T::infinity(), T::min),
        OperationId::Max => xs.iter().copied().fold(T::neg_infinity(), T::max),
        OperationId::Q1 => percentile(xs, 0.25),
        OperationId::Q2 => percentile(xs, 0.5),
        OperationId::Q3 => percentile(xs, 0.75),
        OperationId::Mad => {
            let m = mean(xs);
            xs.iter().map(|&x| (x - m).abs()).sum::<T>() / T::of_usize(xs.len())
        }
        OperationId::Skew => skew(xs),
        OperationId::Kurt => kurt(xs),
    })
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Sample standard deviation (denominator n - 1); 0 for a single value.
pub fn std_dev<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let ss = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>();
    (ss / T::of_usize(xs.len() - 1)).sqrt()
}

/// Percentile with linear interpolation between order statistics,
/// `q` in [0, 1]. Position is `q * (n - 1)`.
pub fn percentile<T: Scalar>(xs: &[T], q: f64) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    percentile_sorted(&v, q)
}

pub fn percentile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn central_moments<T: Scalar>(xs: &[T]) -> (T, T, T) {
    let n = T::of_usize(xs.len());
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 = m2 + d2;
        m3 = m3 + d2 * d;
        m4 = m4 + d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Adjusted Fisher-Pearson skewness; 0 for a constant series.
pub fn skew<T: Scalar>(xs: &[T]) -> T {
    let (m2, m3, _) = central_moments(xs);
    if m2 <= T::epsilon() * T::epsilon() {
        return T::zero();
    }
    let n = T::of_usize(xs.len());
    let g1 = m3 / m2.powf(T::of(1.5));
    (n * (n - T::one())).sqrt() / (n - T::of(2.0)) * g1
}

/// Bias-corrected excess kurtosis (Fisher); 0 for a constant series.
pub fn kurt<T: Scalar>(xs: &[T]) -> T {
    let (m2, _, m4) = central_moments(xs);
    if m2 <= T::epsilon() * T::epsilon() {
        return T::zero();
    }
    let n = T::of_usize(xs.len());
    let one = T::one();
    let g2 = m4 / (m2 * m2) - T::of(3.0);
    ((n + one) * g2 + T::of(6.0)) * (n - one) / ((n - T::of(2.0)) * (n - T::of(3.0)))
}
