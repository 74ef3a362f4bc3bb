//! Unsupervised detectors. Each votes `+1` (failure-like) or `-1` per row,
//! or abstains when the data gives it nothing to work with.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::feature_factory::operations::percentile;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    Kmeans { k: usize },
    IsolationForest { contamination: f64 },
    Lof { k: usize },
    Mahalanobis { quantile: f64 },
    HistogramOutlier { bins: usize, quantile: f64 },
    PcaReconstruction { threshold: f64 },
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorSpec::Kmeans { k } => write!(f, "kmeans(k={k})"),
            DetectorSpec::IsolationForest { contamination } => {
                write!(f, "isolation_forest(contamination={contamination})")
            }
            DetectorSpec::Lof { k } => write!(f, "lof(k={k})"),
            DetectorSpec::Mahalanobis { quantile } => write!(f, "mahalanobis(quantile={quantile})"),
            DetectorSpec::HistogramOutlier { bins, quantile } => {
                write!(f, "histogram_outlier(bins={bins},quantile={quantile})")
            }
            DetectorSpec::PcaReconstruction { threshold } => write!(f, "pca_reconstruction(threshold={threshold})"),
        }
    }
}

/// Flag rows whose LOF exceeds this.
pub const LOF_CUTOFF: f64 = 1.5;
/// Isolation forest size.
pub const IFOREST_TREES: usize = 100;
const IFOREST_SAMPLE: usize = 256;
/// Above this many features the Mahalanobis covariance is taken diagonal.
pub const MAHALANOBIS_FULL_MAX_DIM: usize = 200;
const RIDGE: f64 = 1e-3;

pub type Votes = Result<Vec<i8>, String>;

/// Runs one detector on standardised rows.
pub fn run_detector(spec: &DetectorSpec, rows: &[Vec<f64>], root_seed: u64) -> Votes {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < 3 || d == 0 {
        return Err("fewer than 3 rows or no varying feature".into());
    }
    let seed_ = seed::derive_str(root_seed, &spec.to_string());
    match *spec {
        DetectorSpec::Kmeans { k } => kmeans_votes(rows, k, seed_),
        DetectorSpec::IsolationForest { contamination } => {
            let s = iforest_scores(rows, seed_);
            Ok(flag_above(&s, percentile(&s, 1.0 - contamination)))
        }
        DetectorSpec::Lof { k } => {
            if n <= k {
                return Err(format!("{n} rows is too few for k={k}"));
            }
            Ok(lof_scores(rows, k)
                .iter()
                .map(|&s| if s > LOF_CUTOFF { 1 } else { -1 })
                .collect())
        }
        DetectorSpec::Mahalanobis { quantile } => {
            let s = mahalanobis_sq(rows);
            Ok(flag_above(&s, percentile(&s, quantile)))
        }
        DetectorSpec::HistogramOutlier { bins, quantile } => {
            let s = hbos_scores(rows, bins);
            Ok(flag_above(&s, percentile(&s, quantile)))
        }
        DetectorSpec::PcaReconstruction { threshold } => {
            let e = pca_recon_error(rows, threshold);
            let m = e.iter().sum::<f64>() / n as f64;
            let sd = (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            Ok(flag_above(&e, m + 2.0 * sd))
        }
    }
}

fn flag_above(scores: &[f64], cut: f64) -> Vec<i8> {
    // relative slack keeps rounding noise on tied scores from splitting them
    let cut = cut + 1e-12 * cut.abs().max(1e-12);
    scores.iter().map(|&s| if s > cut { 1 } else { -1 }).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a k-means++ start; the smallest cluster (lowest
/// index on ties) votes `+1`.
fn kmeans_votes(rows: &[Vec<f64>], k: usize, seed_: u64) -> Votes {
    let n = rows.len();
    let mut distinct: Vec<&Vec<f64>> = rows.iter().collect();
    distinct.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    distinct.dedup();
    if k < 2 || distinct.len() < k {
        return Err(format!("fewer than {k} distinct rows"));
    }
    let mut rng = seed::rng(seed_);
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].clone()];
    let mut dmin: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dmin.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in dmin.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        centers.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            dmin[i] = dmin[i].min(sq_dist(r, centers.last().unwrap()));
        }
    }
    let d = rows[0].len();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..100 {
        let next: Vec<usize> = rows
            .par_iter()
            .map(|r| {
                (0..k)
                    .map(|c| (sq_dist(r, &centers[c]), c))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .unwrap()
                    .1
            })
            .collect();
        if next == assign {
            break;
        }
        assign = next;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &c) in rows.iter().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let mut counts = vec![0usize; k];
    for &c in &assign {
        counts[c] += 1;
    }
    let minority = (0..k)
        .filter(|&c| counts[c] > 0)
        .min_by_key(|&c| (counts[c], c))
        .unwrap();
    Ok(assign.iter().map(|&c| if c == minority { 1 } else { -1 }).collect())
}

fn harmonic(i: f64) -> f64 {
    i.ln() + 0.577_215_664_901_532_9
}

/// Average unsuccessful-search path length in a binary search tree of `n`.
pub fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => 2.0 * harmonic((n - 1) as f64) - 2.0 * (n - 1) as f64 / n as f64,
    }
}

enum ITree {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        value: f64,
        left: Box<ITree>,
        right: Box<ITree>,
    },
}

fn build_itree(
    rows: &[Vec<f64>],
    idx: &[usize],
    depth: usize,
    limit: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> ITree {
    if depth >= limit || idx.len() <= 1 {
        return ITree::Leaf { size: idx.len() };
    }
    let d = rows[0].len();
    let varying: Vec<(usize, f64, f64)> = (0..d)
        .filter_map(|j| {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(rows[i][j]), hi.max(rows[i][j]))
            });
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if varying.is_empty() {
        return ITree::Leaf { size: idx.len() };
    }
    let (feature, lo, hi) = varying[rng.random_range(0..varying.len())];
    let value = rng.random_range(lo..hi);
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][feature] < value);
    ITree::Split {
        feature,
        value,
        left: Box::new(build_itree(rows, &l, depth + 1, limit, rng)),
        right: Box::new(build_itree(rows, &r, depth + 1, limit, rng)),
    }
}

fn path_length(t: &ITree, x: &[f64], depth: usize) -> f64 {
    match t {
        ITree::Leaf { size } => depth as f64 + c_factor(*size),
        ITree::Split {
            feature,
            value,
            left,
            right,
        } => {
            if x[*feature] < *value {
                path_length(left, x, depth + 1)
            } else {
                path_length(right, x, depth + 1)
            }
        }
    }
}

/// Anomaly score `2^(-E[h] / c(psi))`, higher is more isolated.
pub fn iforest_scores(rows: &[Vec<f64>], seed_: u64) -> Vec<f64> {
    let n = rows.len();
    let psi = n.min(IFOREST_SAMPLE);
    let limit = (psi as f64).log2().ceil() as usize;
    let trees: Vec<ITree> = (0..IFOREST_TREES)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_for(seed_, t as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(psi);
            build_itree(rows, &idx, 0, limit, &mut rng)
        })
        .collect();
    let c = c_factor(psi);
    rows.par_iter()
        .map(|x| {
            let h = trees.iter().map(|t| path_length(t, x, 0)).sum::<f64>() / trees.len() as f64;
            2f64.powf(-h / c)
        })
        .collect()
}

/// Brute-force local outlier factor; neighbours ranked by distance then
/// index.
pub fn lof_scores(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = rows.len();
    let knn: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&rows[i], &rows[j]).sqrt(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d
        })
        .collect();
    let kdist: Vec<f64> = knn.iter().map(|v| v[k - 1].0).collect();
    let lrd: Vec<f64> = knn
        .iter()
        .map(|v| {
            let reach = v.iter().map(|&(d, j)| d.max(kdist[j])).sum::<f64>() / k as f64;
            1.0 / (reach + 1e-10)
        })
        .collect();
    knn.iter()
        .enumerate()
        .map(|(i, v)| v.iter().map(|&(_, j)| lrd[j]).sum::<f64>() / k as f64 / lrd[i])
        .collect()
}

/// Squared Mahalanobis distance to the mean under a ridge-regularised
/// covariance.
pub fn mahalanobis_sq(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let denom = (n - 1) as f64;
    if d > MAHALANOBIS_FULL_MAX_DIM {
        let var: Vec<f64> = (0..d)
            .map(|j| centered.iter().map(|r| r[j] * r[j]).sum::<f64>() / denom + RIDGE)
            .collect();
        return centered
            .iter()
            .map(|r| r.iter().zip(&var).map(|(v, s)| v * v / s).sum())
            .collect();
    }
    let x = DMatrix::from_fn(n, d, |i, j| centered[i][j]);
    let cov = x.transpose() * &x / denom + DMatrix::identity(d, d) * RIDGE;
    let chol = cov.cholesky().expect("ridge keeps the covariance positive definite");
    (0..n)
        .into_par_iter()
        .map(|i| {
            let v = nalgebra::DVector::from_row_slice(&centered[i]);
            let s = chol.solve(&v);
            v.dot(&s)
        })
        .collect()
}

/// Histogram-based outlier score: summed negative log of the equal-width
/// bin density of each feature.
pub fn hbos_scores(rows: &[Vec<f64>], bins: usize) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut scores = vec![0.0; n];
    for j in 0..d {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r[j]), hi.max(r[j]))
        });
        if hi <= lo {
            continue;
        }
        let w = (hi - lo) / bins as f64;
        let b_of = |v: f64| (((v - lo) / w) as usize).min(bins - 1);
        let mut counts = vec![0usize; bins];
        for r in rows {
            counts[b_of(r[j])] += 1;
        }
        let max = *counts.iter().max().unwrap() as f64;
        for (s, r) in scores.iter_mut().zip(rows) {
            let h = counts[b_of(r[j])] as f64 / max;
            *s -= h.max(1e-12).ln();
        }
    }
    scores
}

/// Squared residual after projecting each row on the leading principal
/// components covering `threshold` of the variance.
pub fn pca_recon_error(rows: &[Vec<f64>], threshold: f64) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let norms: Vec<f64> = (0..n).map(|i| x.row(i).norm_squared()).collect();
    // work in the smaller of the feature and sample spaces
    let (eig, via_gram) = if d <= n {
        (SymmetricEigen::new(x.transpose() * &x), false)
    } else {
        (SymmetricEigen::new(&x * x.transpose()), true)
    };
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return vec![0.0; n];
    }
    let mut explained = vec![0.0; n];
    let mut acc = 0.0;
    for &k in &order {
        let lam = eig.eigenvalues[k].max(0.0);
        let v = eig.eigenvectors.column(k);
        for (i, e) in explained.iter_mut().enumerate() {
            let t = if via_gram {
                v[i] * lam.sqrt()
            } else {
                x.row(i).dot(&v.transpose())
            };
            *e += t * t;
        }
        acc += lam / total;
        if acc >= threshold - 1e-12 {
            break;
        }
    }
    norms.iter().zip(&explained).map(|(a, b)| (a - b).max(0.0)).collect()
}
