//! Column imputers: k-nearest-neighbour, mean, median and most frequent.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data_model::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputerMethod {
    Knn,
    Mean,
    Median,
    MostFrequent,
}

impl fmt::Display for ImputerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImputerMethod::Knn => "knn",
            ImputerMethod::Mean => "mean",
            ImputerMethod::Median => "median",
            ImputerMethod::MostFrequent => "most_frequent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputerSpec {
    pub method: ImputerMethod,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
}

fn default_k() -> usize {
    5
}

impl ImputerSpec {
    pub fn new(method: ImputerMethod) -> Self {
        ImputerSpec {
            method,
            k_neighbors: default_k(),
        }
    }

    pub fn knn(k_neighbors: usize) -> Self {
        ImputerSpec {
            method: ImputerMethod::Knn,
            k_neighbors,
        }
    }
}

impl Default for ImputerSpec {
    fn default() -> Self {
        ImputerSpec::new(ImputerMethod::Mean)
    }
}

/// A column removed because it had no observed value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub column_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Imputed<T> {
    pub dataset: Dataset<T>,
    pub dropped: Vec<DroppedColumn>,
    /// Cells where knn found no usable neighbour and fell back to the mean.
    pub knn_fallbacks: usize,
}

/// Fills every missing cell; observed cells are never modified.
pub fn fit_impute<T: Scalar>(d: &Dataset<T>, spec: &ImputerSpec) -> Result<Imputed<T>> {
    if spec.k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    let mut keep = Vec::with_capacity(d.n_cols());
    let mut dropped = Vec::new();
    for c in 0..d.n_cols() {
        if (0..d.n_rows()).any(|r| !d.is_missing(r, c)) {
            keep.push(c);
        } else {
            log::warn!("dropping column {} with no observed values", d.column_ids()[c]);
            dropped.push(DroppedColumn {
                column_id: d.column_ids()[c].clone(),
                reason: "no observed values".into(),
            });
        }
    }
    if keep.is_empty() {
        return Err(Error::Structure("every column is entirely missing".into()));
    }
    let mut out = if dropped.is_empty() {
        d.clone()
    } else {
        d.select_columns(&keep)
    };
    if out.is_complete() {
        return Ok(Imputed {
            dataset: out,
            dropped,
            knn_fallbacks: 0,
        });
    }

    let stats: Vec<T> = (0..out.n_cols())
        .map(|c| {
            let obs = out.observed(c);
            match spec.method {
                ImputerMethod::Mean | ImputerMethod::Knn => mean(&obs),
                ImputerMethod::Median => median(&obs),
                ImputerMethod::MostFrequent => most_frequent(&obs),
            }
        })
        .collect();

    let mut knn_fallbacks = 0;
    if spec.method == ImputerMethod::Knn {
        let fills = knn_fills(&out, spec.k_neighbors);
        for (r, c, v) in fills {
            match v {
                Some(v) => out.fill(r, c, v),
                None => {
                    knn_fallbacks += 1;
                    out.fill(r, c, stats[c]);
                }
            }
        }
    } else {
        for r in 0..out.n_rows() {
            for c in 0..out.n_cols() {
                if out.is_missing(r, c) {
                    out.fill(r, c, stats[c]);
                }
            }
        }
    }
    Ok(Imputed {
        dataset: out,
        dropped,
        knn_fallbacks,
    })
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

fn median<T: Scalar>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::of(2.0)
    }
}

/// Mode of the observed values; ties go to the smallest value.
fn most_frequent<T: Scalar>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut best = v[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = v[i];
        }
        i = j;
    }
    best
}

/// Distance over the dimensions observed in both rows, scaled up by the
/// ratio of total to shared dimensions. `None` when nothing is shared.
fn partial_distance<T: Scalar>(d: &Dataset<T>, a: usize, b: usize) -> Option<f64> {
    let (ra, ma) = (d.row(a), d.row_mask(a));
    let (rb, mb) = (d.row(b), d.row_mask(b));
    let mut sum = 0.0;
    let mut shared = 0usize;
    for j in 0..d.n_cols() {
        if !ma[j] && !mb[j] {
            let diff = ra[j].as_f64() - rb[j].as_f64();
            sum += diff * diff;
            shared += 1;
        }
    }
    (shared > 0).then(|| (sum * d.n_cols() as f64 / shared as f64).sqrt())
}

/// Neighbour averages for every missing cell, computed against the
/// original (unfilled) data. Neighbours are ranked by distance, ties by row
/// index; only rows observing the target column qualify.
fn knn_fills<T: Scalar>(d: &Dataset<T>, k: usize) -> Vec<(usize, usize, Option<T>)> {
    use rayon::prelude::*;
    let rows_with_missing: Vec<usize> = (0..d.n_rows()).filter(|&r| d.row_mask(r).iter().any(|&m| m)).collect();
    rows_with_missing
        .par_iter()
        .flat_map_iter(|&r| {
            let mut neighbours: Vec<(f64, usize)> = (0..d.n_rows())
                .filter(|&o| o != r)
                .filter_map(|o| partial_distance(d, r, o).map(|dist| (dist, o)))
                .collect();
            neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (0..d.n_cols())
                .filter(|&c| d.is_missing(r, c))
                .map(|c| {
                    let picked: Vec<T> = neighbours.iter().filter_map(|&(_, o)| d.get(o, c)).take(k).collect();
                    let v = (!picked.is_empty()).then(|| mean(&picked));
                    (r, c, v)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}
