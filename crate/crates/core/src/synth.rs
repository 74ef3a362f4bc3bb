//! Synthetic generators with known ground truth, used by tests, the bundled
//! mini dataset and benchmark-style checks.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{Dataset, FAILURE, NORMAL};
use crate::error::{Error, Result};
use crate::hpo::{Config, Dimension, Outcome, SearchSpace};
use crate::learners::loss::sigmoid;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InformativeSpec {
    pub n_rows: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    /// Target share of failure labels.
    pub failure_rate: f64,
    /// Scale of the informative coefficients.
    pub signal: f64,
    pub seed: u64,
}

impl Default for InformativeSpec {
    fn default() -> Self {
        InformativeSpec {
            n_rows: 400,
            n_informative: 5,
            n_noise: 50,
            failure_rate: 0.3,
            signal: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset<f64>,
    /// Column positions of the informative features, ascending.
    pub informative: Vec<usize>,
}

/// Logistic labels driven by a few standard-normal features plus one
/// pairwise interaction; the intercept is solved so the expected failure
/// share matches the target. Column order is shuffled.
pub fn informative(spec: &InformativeSpec) -> Result<Synthetic> {
    if spec.n_informative == 0 || !(spec.failure_rate > 0.0 && spec.failure_rate < 1.0) {
        return Err(Error::invalid("need informative features and a failure rate in (0, 1)"));
    }
    let mut rng = seed::rng(spec.seed);
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let d = spec.n_informative + spec.n_noise;
    let n = spec.n_rows;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| g.sample(&mut rng)).collect()).collect();
    let beta: Vec<f64> = (0..spec.n_informative)
        .map(|j| spec.signal * (2.0 - 1.2 * j as f64 / spec.n_informative as f64) * if j % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let eta: Vec<f64> = rows
        .iter()
        .map(|r| {
            let lin: f64 = beta.iter().zip(r).map(|(b, x)| b * x).sum();
            let inter = if spec.n_informative > 1 {
                0.5 * spec.signal * r[0] * r[1]
            } else {
                0.0
            };
            lin + inter
        })
        .collect();
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let rate = eta.iter().map(|e| sigmoid(e + mid)).sum::<f64>() / n as f64;
        if rate < spec.failure_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b0 = 0.5 * (lo + hi);
    let labels: Vec<i8> = eta
        .iter()
        .map(|e| {
            if rng.random_bool(sigmoid(e + b0)) {
                FAILURE
            } else {
                NORMAL
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    // order[new] = old
    let columns: Vec<Vec<f64>> = order.iter().map(|&old| rows.iter().map(|r| r[old]).collect()).collect();
    let ids = (0..d).map(|j| format!("f{j:03}")).collect();
    let mut informative: Vec<usize> = (0..d).filter(|&new| order[new] < spec.n_informative).collect();
    informative.sort_unstable();
    Ok(Synthetic {
        dataset: Dataset::from_columns(&columns, labels, ids)?,
        informative,
    })
}

/// The 14:1 imbalanced benchmark used for the loss ablation: 2,000 rows,
/// 20 features, 5 informative.
pub fn imbalanced_benchmark(seed_: u64) -> Result<Synthetic> {
    informative(&InformativeSpec {
        n_rows: 2000,
        n_informative: 5,
        n_noise: 15,
        failure_rate: 1.0 / 15.0,
        signal: 1.0,
        seed: seed_,
    })
}

/// Quadratic bowl with evaluation noise that vanishes at the full budget.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFidelityQuadratic {
    pub centre: Vec<f64>,
    pub max_budget: f64,
    pub noise: f64,
}

impl MultiFidelityQuadratic {
    pub fn new(dim: usize, max_budget: f64, noise: f64, seed_: u64) -> Self {
        let mut rng = seed::rng(seed_);
        MultiFidelityQuadratic {
            centre: (0..dim).map(|_| rng.random_range(0.2..0.8)).collect(),
            max_budget,
            noise,
        }
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::new(
            (0..self.centre.len())
                .map(|i| Dimension::uniform(&format!("x{i}"), 0.0, 1.0))
                .collect(),
        )
        .expect("valid space")
    }

    /// Best attainable metric.
    pub fn optimum(&self) -> f64 {
        0.0
    }

    pub fn evaluate(&self, c: &Config, budget: f64, trial_seed: u64) -> Outcome {
        let clean: f64 = -self
            .centre
            .iter()
            .enumerate()
            .map(|(i, m)| (c[&format!("x{i}")].as_f64().unwrap_or(0.0) - m).powi(2))
            .sum::<f64>();
        let scale = self.noise * (1.0 - budget / self.max_budget).max(0.0);
        let e: f64 = Normal::new(0.0, 1.0)
            .expect("unit normal")
            .sample(&mut seed::rng(trial_seed));
        Ok(clean + scale * e)
    }
}

/// Shape of the SECOM release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecomShape {
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_failures: usize,
    pub n_missing: usize,
    pub n_constant: usize,
}

pub const SECOM_SHAPE: SecomShape = SecomShape {
    n_rows: 1567,
    n_cols: 590,
    n_failures: 104,
    n_missing: 41_951,
    n_constant: 116,
};

/// Writes a fixture in the SECOM file layout (space separated values with
/// `NaN` for missing cells, and a labels file of `label "timestamp"` lines)
/// whose profile hits `shape` exactly. Returns `(data, labels)` paths.
pub fn write_secom_like(
    dir: &Path,
    shape: &SecomShape,
    seed_: u64,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let SecomShape {
        n_rows,
        n_cols,
        n_failures,
        n_missing,
        n_constant,
    } = *shape;
    if n_constant >= n_cols || n_failures > n_rows || n_missing > (n_cols - n_constant) * (n_rows - 2) {
        return Err(Error::invalid("impossible fixture shape"));
    }
    let mut rng = seed::rng(seed_);
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cols_kind: Vec<bool> = (0..n_cols).map(|j| j < n_constant).collect();
    cols_kind.shuffle(&mut rng);
    let varying: Vec<usize> = (0..n_cols).filter(|&j| !cols_kind[j]).collect();
    // missing cells spread over varying columns, never touching rows 0 and 1
    // so every varying column keeps two distinct observed values
    let mut missing = vec![vec![false; n_cols]; n_rows];
    let mut slots: Vec<(usize, usize)> = varying.iter().flat_map(|&j| (2..n_rows).map(move |r| (r, j))).collect();
    slots.shuffle(&mut rng);
    for &(r, j) in slots.iter().take(n_missing) {
        missing[r][j] = true;
    }
    let mut labels: Vec<i8> = (0..n_rows)
        .map(|i| if i < n_failures { FAILURE } else { NORMAL })
        .collect();
    labels.shuffle(&mut rng);
    let data_path = dir.join("secom.data");
    let labels_path = dir.join("secom_labels.data");
    let mut data = String::new();
    for r in 0..n_rows {
        let line: Vec<String> = (0..n_cols)
            .map(|j| {
                if cols_kind[j] {
                    "0".to_string()
                } else if missing[r][j] {
                    "NaN".to_string()
                } else if r < 2 {
                    format!("{}", r as f64 + 1.0)
                } else {
                    format!("{:.4}", 100.0 + g.sample(&mut rng))
                }
            })
            .collect();
        data.push_str(&line.join(" "));
        data.push('\n');
    }
    std::fs::write(&data_path, data).map_err(|e| Error::io(&data_path, e))?;
    let mut lab = String::new();
    for (i, l) in labels.iter().enumerate() {
        lab.push_str(&format!(
            "{l} \"{:02}/07/2008 {:02}:{:02}:00\"\n",
            1 + i % 28,
            i % 24,
            i % 60
        ));
    }
    std::fs::write(&labels_path, lab).map_err(|e| Error::io(&labels_path, e))?;
    Ok((data_path, labels_path))
}

/// Small process-like dataset with missing blocks, drifting sensors and a
/// failure signal, used for the bundled demo and the determinism checks.
pub fn mini_dataset(n_rows: usize, seed_: u64) -> Result<Dataset<f64>> {
    let mut rng = seed::rng(seed_);
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let n_cols = 12;
    let mut values = vec![0.0; n_rows * n_cols];
    let mut miss = vec![false; n_rows * n_cols];
    let mut labels = Vec::with_capacity(n_rows);
    let mut drift = 0.0;
    for r in 0..n_rows {
        drift += 0.02 * g.sample(&mut rng);
        let latent = g.sample(&mut rng);
        let row = &mut values[r * n_cols..(r + 1) * n_cols];
        // two unit processes of four sensors each, plus four loose signals
        for j in 0..4 {
            row[j] = 10.0 + latent * (1.0 + 0.2 * j as f64) + 0.3 * g.sample(&mut rng) + drift;
        }
        for j in 4..8 {
            row[j] = 5.0 - 0.5 * latent + 0.5 * g.sample(&mut rng);
        }
        for j in 8..12 {
            row[j] = g.sample(&mut rng) * (j - 7) as f64;
        }
        let z = 1.8 * latent - 1.2 * row[9] / 2.0 - 2.6;
        labels.push(if rng.random_bool(sigmoid(z)) { FAILURE } else { NORMAL });
        // the second process is skipped on every fifth lot
        if r % 5 == 4 {
            for j in 4..8 {
                miss[r * n_cols + j] = true;
            }
        }
        if rng.random_bool(0.03) {
            miss[r * n_cols + 10] = true;
        }
    }
    for (v, &m) in values.iter_mut().zip(&miss) {
        if m {
            *v = f64::NAN;
        } else {
            *v = (*v * 1e4).round() / 1e4;
        }
    }
    let ids = (0..n_cols).map(|j| format!("s{j:02}")).collect();
    let stamps = (0..n_rows)
        .map(|r| format!("2024-01-{:02}T{:02}:00:00", 1 + r / 24 % 28, r % 24))
        .collect();
    Dataset::new(n_cols, values, miss, labels, ids, Some(stamps))
}
