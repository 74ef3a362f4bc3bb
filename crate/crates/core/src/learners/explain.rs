//! Global explanations: split-gain importance, permutation importance and
//! partial dependence.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbt::{BoostedModel, Node};
use super::Classifier;
use crate::error::{Error, Result};
use crate::feature_factory::operations::percentile;
use crate::matrix::DenseMatrix;
use crate::seed;

/// Total split gain per feature; features never split on are absent.
pub fn feature_importance(model: &BoostedModel) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for node in model.trees.iter().flat_map(|t| &t.nodes) {
        if let Node::Split { feature, gain, .. } = node {
            *out.entry(*feature).or_insert(0.0) += gain;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialDependence {
    pub feature: usize,
    pub grid: Vec<f64>,
    pub mean_prediction: Vec<f64>,
}

impl PartialDependence {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("grid,mean_prediction\n");
        for (g, m) in self.grid.iter().zip(&self.mean_prediction) {
            s.push_str(&format!("{g},{m}\n"));
        }
        s
    }
}

/// Quantile grid of the feature; a single point sits at the median.
pub fn quantile_grid(values: &[f64], grid_size: usize) -> Vec<f64> {
    match grid_size {
        0 => Vec::new(),
        1 => vec![percentile(values, 0.5)],
        g => (0..g).map(|k| percentile(values, k as f64 / (g - 1) as f64)).collect(),
    }
}

/// Mean predicted probability with the feature overridden to each grid value.
pub fn partial_dependence<C: Classifier + ?Sized>(
    model: &C,
    x: &DenseMatrix,
    feature: usize,
    grid_size: usize,
) -> Result<PartialDependence> {
    if feature >= x.n_cols() {
        return Err(Error::invalid(format!("feature {feature} out of range")));
    }
    if grid_size == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    let grid = quantile_grid(x.col(feature), grid_size);
    let mut mean_prediction = Vec::with_capacity(grid.len());
    for &v in &grid {
        let xo = x.with_column(feature, vec![v; x.n_rows()]);
        let p = model.predict_proba(&xo)?;
        mean_prediction.push(p.iter().sum::<f64>() / p.len() as f64);
    }
    Ok(PartialDependence {
        feature,
        grid,
        mean_prediction,
    })
}

/// Mean log-loss with probabilities clipped away from 0 and 1.
pub fn log_loss(p: &[f64], y: &[u8]) -> f64 {
    let eps = 1e-15;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / p.len() as f64
}

/// Increase in log-loss when a column is shuffled, averaged over repeats and
/// clamped at zero. Features the model never reads score 0 without being
/// evaluated.
pub fn permutation_importance<C: Classifier + ?Sized>(
    model: &C,
    x: &DenseMatrix,
    y: &[u8],
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let base = log_loss(&model.predict_proba(x)?, y);
    let used = model.used_features();
    let scores: Vec<(usize, f64)> = used
        .par_iter()
        .map(|&j| {
            let mut total = 0.0;
            for rep in 0..repeats.max(1) {
                let mut rng = seed::rng_for(seed::derive(seed, j as u64), rep as u64);
                let mut col = x.col(j).to_vec();
                col.shuffle(&mut rng);
                let p = model.predict_proba(&x.with_column(j, col))?;
                total += log_loss(&p, y) - base;
            }
            Ok((j, (total / repeats.max(1) as f64).max(0.0)))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; x.n_cols()];
    for (j, s) in scores {
        out[j] = s;
    }
    Ok(out)
}
