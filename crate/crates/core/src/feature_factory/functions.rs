//! Series transforms: rolling windows, relative changes, distribution and
//! frequency-domain views, and cross-column projections.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::operations::{mean, percentile_sorted};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionId {
    Win5Mean,
    Win5Std,
    Win5Max,
    Win5Min,
    Pct,
    Diff,
    Abs,
    Cdf,
    Corp,
    Pca,
    Filter,
    Qcd,
    Logr,
    Fft,
    FftFilter,
    Llt,
}

impl FunctionId {
    pub const ALL: [FunctionId; 16] = [
        FunctionId::Win5Mean,
        FunctionId::Win5Std,
        FunctionId::Win5Max,
        FunctionId::Win5Min,
        FunctionId::Pct,
        FunctionId::Diff,
        FunctionId::Abs,
        FunctionId::Cdf,
        FunctionId::Corp,
        FunctionId::Pca,
        FunctionId::Filter,
        FunctionId::Qcd,
        FunctionId::Logr,
        FunctionId::Fft,
        FunctionId::FftFilter,
        FunctionId::Llt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::Win5Mean => "win5_mean",
            FunctionId::Win5Std => "win5_std",
            FunctionId::Win5Max => "win5_max",
            FunctionId::Win5Min => "win5_min",
            FunctionId::Pct => "pct",
            FunctionId::Diff => "diff",
            FunctionId::Abs => "abs",
            FunctionId::Cdf => "cdf",
            FunctionId::Corp => "corp",
            FunctionId::Pca => "pca",
            FunctionId::Filter => "filter",
            FunctionId::Qcd => "qcd",
            FunctionId::Logr => "logr",
            FunctionId::Fft => "fft",
            FunctionId::FftFilter => "fft_filter",
            FunctionId::Llt => "llt",
        }
    }

    /// Functions that map one series to one derived series.
    pub fn is_series(self) -> bool {
        !matches!(
            self,
            FunctionId::Corp | FunctionId::Pca | FunctionId::Qcd | FunctionId::Llt
        )
    }

    /// Functions consuming consecutive pairs; they need at least two values.
    pub fn is_sequential(self) -> bool {
        matches!(self, FunctionId::Pct | FunctionId::Diff | FunctionId::Logr)
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionParams {
    pub window: usize,
    pub min_periods: usize,
    pub pca_threshold: f64,
    pub llt_s_values: Vec<f64>,
    /// Time step between consecutive samples for the Laplace quadrature.
    pub llt_dt: f64,
    pub filter_width: usize,
}

impl Default for FunctionParams {
    fn default() -> Self {
        FunctionParams {
            window: 5,
            min_periods: 1,
            pca_threshold: 0.95,
            llt_s_values: vec![0.5, 1.0, 2.0],
            llt_dt: 1.0,
            filter_width: 3,
        }
    }
}

impl FunctionParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.min_periods == 0 || self.min_periods > self.window {
            return Err(Error::invalid("min_periods must lie in [1, window]"));
        }
        if !(self.pca_threshold > 0.0 && self.pca_threshold <= 1.0) {
            return Err(Error::invalid("pca_threshold must lie in (0, 1]"));
        }
        if self.llt_s_values.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("every llt s-value must be positive"));
        }
        if !(self.llt_dt > 0.0) {
            return Err(Error::invalid("llt_dt must be positive"));
        }
        if self.filter_width == 0 {
            return Err(Error::invalid("filter_width must be at least 1"));
        }
        Ok(())
    }
}

/// Result of one function application.
///
/// Series functions yield one column; `pca` yields one column per retained
/// component; `qcd`, `corp` and `llt` yield length-one columns (one per
/// s-value for `llt`). `sentinels` counts entries that were undefined or
/// non-finite and replaced by 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionOutput<T> {
    pub columns: Vec<Vec<T>>,
    pub sentinels: usize,
}

impl<T: Scalar> FunctionOutput<T> {
    fn single(column: Vec<T>) -> Self {
        let mut out = FunctionOutput {
            columns: vec![column],
            sentinels: 0,
        };
        out.sanitize();
        out
    }

    fn sanitize(&mut self) {
        for c in &mut self.columns {
            for v in c.iter_mut() {
                if !v.is_finite() {
                    *v = T::zero();
                    self.sentinels += 1;
                }
            }
        }
    }

    /// The column of a single-column output.
    pub fn series(&self) -> &[T] {
        &self.columns[0]
    }
}

/// Applies `f` to `col` (and `col2` for the two-column functions `corp`
/// and `pca`).
pub fn apply_function<T: Scalar>(
    col: &[T],
    col2: Option<&[T]>,
    f: FunctionId,
    params: &FunctionParams,
) -> Result<FunctionOutput<T>> {
    if col.is_empty() {
        return Err(Error::invalid(format!("{f} of an empty column")));
    }
    if f.is_sequential() && col.len() < 2 {
        return Err(Error::invalid(format!("{f} needs at least two values")));
    }
    let out = match f {
        FunctionId::Win5Mean => FunctionOutput::single(rolling(col, params, |w| mean(w))),
        FunctionId::Win5Std => FunctionOutput::single(rolling(col, params, |w| {
            if w.len() < 2 {
                T::nan()
            } else {
                super::operations::std_dev(w)
            }
        })),
        FunctionId::Win5Max => FunctionOutput::single(rolling(col, params, |w| {
            w.iter().copied().fold(T::neg_infinity(), T::max)
        })),
        FunctionId::Win5Min => {
            FunctionOutput::single(rolling(col, params, |w| w.iter().copied().fold(T::infinity(), T::min)))
        }
        FunctionId::Pct => {
            FunctionOutput::single(col.windows(2).map(|w| (w[1] - w[0]) / w[0] * T::of(100.0)).collect())
        }
        FunctionId::Diff => FunctionOutput::single(col.windows(2).map(|w| w[1] - w[0]).collect()),
        FunctionId::Abs => FunctionOutput::single(col.iter().map(|x| x.abs()).collect()),
        FunctionId::Cdf => FunctionOutput::single(cdf_series(col)),
        FunctionId::Logr => FunctionOutput::single(
            col.windows(2)
                .map(|w| {
                    if w[0] > T::zero() && w[1] > T::zero() {
                        (w[1] / w[0]).ln()
                    } else {
                        T::nan()
                    }
                })
                .collect(),
        ),
        FunctionId::Filter => FunctionOutput::single(moving_average(col, params.filter_width)),
        FunctionId::Fft => FunctionOutput::single(half_spectrum(col)),
        FunctionId::FftFilter => FunctionOutput::single(half_spectrum(&moving_average(col, params.filter_width))),
        FunctionId::Qcd => FunctionOutput::single(vec![qcd(col)]),
        FunctionId::Llt => {
            let mut out = FunctionOutput {
                columns: params
                    .llt_s_values
                    .iter()
                    .map(|&s| vec![laplace(col, s, params.llt_dt)])
                    .collect(),
                sentinels: 0,
            };
            out.sanitize();
            out
        }
        FunctionId::Corp => {
            let other = col2.ok_or_else(|| Error::invalid("corp needs two columns"))?;
            if other.len() != col.len() {
                return Err(Error::invalid("corp columns differ in length"));
            }
            FunctionOutput::single(vec![pearson(col, other)])
        }
        FunctionId::Pca => {
            let other = col2.ok_or_else(|| Error::invalid("pca needs two columns"))?;
            if other.len() != col.len() {
                return Err(Error::invalid("pca columns differ in length"));
            }
            let mut out = FunctionOutput {
                columns: pca_project(&[col.to_vec(), other.to_vec()], params.pca_threshold),
                sentinels: 0,
            };
            out.sanitize();
            out
        }
    };
    Ok(out)
}

/// Trailing rolling statistic; positions with fewer than `min_periods`
/// values produce NaN (later replaced by the sentinel).
fn rolling<T: Scalar>(col: &[T], params: &FunctionParams, stat: impl Fn(&[T]) -> T) -> Vec<T> {
    (0..col.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(params.window);
            let w = &col[start..=i];
            if w.len() < params.min_periods {
                T::nan()
            } else {
                stat(w)
            }
        })
        .collect()
}

/// Centered moving average; the window shrinks at the edges.
pub fn moving_average<T: Scalar>(col: &[T], width: usize) -> Vec<T> {
    let half = width / 2;
    (0..col.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(col.len());
            mean(&col[lo..hi])
        })
        .collect()
}

/// Empirical `P(X < x)` over the column, with strict inequality.
pub fn empirical_cdf<T: Scalar>(col: &[T], x: T) -> T {
    let below = col.iter().filter(|&&v| v < x).count();
    T::of_usize(below) / T::of_usize(col.len())
}

fn cdf_series<T: Scalar>(col: &[T]) -> Vec<T> {
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = T::of_usize(col.len());
    col.iter()
        .map(|&x| T::of_usize(sorted.partition_point(|&v| v < x)) / n)
        .collect()
}

/// Quartile coefficient of dispersion; NaN when `Q3 + Q1 = 0`.
pub fn qcd<T: Scalar>(col: &[T]) -> T {
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let q1 = percentile_sorted(&sorted, 0.25);
    let q3 = percentile_sorted(&sorted, 0.75);
    let denom = q3 + q1;
    if denom == T::zero() {
        T::nan()
    } else {
        (q3 - q1) / denom
    }
}

/// Pearson correlation; 0 when either column is constant.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return T::zero();
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    r.max(-T::one()).min(T::one())
}

/// Trapezoidal quadrature of `x(t) e^(-s t)` with sample `i` at `t = i * dt`.
pub fn laplace<T: Scalar>(col: &[T], s: f64, dt: f64) -> T {
    let n = col.len();
    if n < 2 {
        return T::zero();
    }
    let f = |i: usize| col[i].as_f64() * (-s * i as f64 * dt).exp();
    let interior: f64 = (1..n - 1).map(f).sum();
    T::of(dt * (interior + 0.5 * (f(0) + f(n - 1))))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Magnitudes of the full DFT of the mean-centered column.
pub fn full_spectrum<T: Scalar>(col: &[T]) -> Vec<T> {
    let n = col.len();
    let m = mean(col).as_f64();
    let mut buf: Vec<Complex<f64>> = col.iter().map(|v| Complex::new(v.as_f64() - m, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    buf.iter().map(|c| T::of(c.norm())).collect()
}

/// First `ceil(N / 2)` magnitudes; the rest mirror them for real input.
pub fn half_spectrum<T: Scalar>(col: &[T]) -> Vec<T> {
    let mut mags = full_spectrum(col);
    mags.truncate(col.len().div_ceil(2));
    mags
}

/// Projects the columns onto the principal components that together
/// retain at least `threshold` of the variance.
///
/// Columns are centered, not scaled. Components come in decreasing
/// eigenvalue order with the sign fixed so the largest-magnitude loading is
/// positive. All-constant input yields a single zero projection.
pub fn pca_project<T: Scalar>(columns: &[Vec<T>], threshold: f64) -> Vec<Vec<T>> {
    let (components, _) = pca_components(columns, threshold);
    let n = columns.first().map_or(0, Vec::len);
    let means: Vec<f64> = columns.iter().map(|c| mean(c).as_f64()).collect();
    components
        .iter()
        .map(|w| {
            (0..n)
                .map(|r| {
                    let s: f64 = columns
                        .iter()
                        .zip(w)
                        .zip(&means)
                        .map(|((c, wj), m)| (c[r].as_f64() - m) * wj)
                        .sum();
                    T::of(s)
                })
                .collect()
        })
        .collect()
}

/// Retained loading vectors and the explained-variance fraction of each.
pub fn pca_components<T: Scalar>(columns: &[Vec<T>], threshold: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if p == 0 || n == 0 {
        return (Vec::new(), Vec::new());
    }
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = mean(c).as_f64();
            c.iter().map(|v| v.as_f64() - m).collect()
        })
        .collect();
    let denom = (n.max(2) - 1) as f64;
    let cov = nalgebra::DMatrix::from_fn(p, p, |i, j| {
        centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / denom
    });
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        let mut w = vec![0.0; p];
        w[0] = 1.0;
        return (vec![w], vec![0.0]);
    }
    let mut comps = Vec::new();
    let mut fractions = Vec::new();
    let mut acc = 0.0;
    for &k in &order {
        let frac = eig.eigenvalues[k].max(0.0) / total;
        let mut w: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = w
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            w.iter_mut().for_each(|v| *v = -*v);
        }
        comps.push(w);
        fractions.push(frac);
        acc += frac;
        if acc >= threshold - 1e-12 {
            break;
        }
    }
    (comps, fractions)
}
