//! Cyclic additive boosting: each pass visits every feature once and adds a
//! single-cut stump on that feature, fitted by a Newton step on the
//! cross-entropy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::Cuts;
use super::gbt::{base_log_odds, bin_matrix};
use super::loss::sigmoid;
use super::{check_labels, Classifier};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GamSpec {
    pub n_cycles: usize,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub lambda: f64,
}

impl Default for GamSpec {
    fn default() -> Self {
        GamSpec {
            n_cycles: 100,
            learning_rate: 0.1,
            n_bins: 32,
            lambda: 1.0,
        }
    }
}

impl GamSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=256).contains(&self.n_bins) {
            return Err(Error::invalid(format!("n_bins {} outside [2, 256]", self.n_bins)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub n_features: usize,
    /// Intercept after centring every shape on the training rows.
    pub base_score: f64,
    pub cuts: Vec<Cuts>,
    /// One value per bin and feature.
    pub shapes: Vec<Vec<f64>>,
    /// Mean absolute contribution on the training rows.
    pub importance: Vec<f64>,
    pub spec: GamSpec,
}

impl AdditiveModel {
    pub fn contribution(&self, feature: usize, x: f64) -> f64 {
        self.shapes[feature][self.cuts[feature].bin(x)]
    }

    /// Sum of absolute jumps along a shape.
    pub fn total_variation(&self, feature: usize) -> f64 {
        self.shapes[feature].windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

impl Classifier for AdditiveModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn raw_score(&self, x: &DenseMatrix, r: usize) -> f64 {
        self.base_score
            + (0..self.n_features)
                .map(|j| self.contribution(j, x.get(r, j)))
                .sum::<f64>()
    }

    fn used_features(&self) -> Vec<usize> {
        (0..self.n_features)
            .filter(|&j| self.shapes[j].iter().any(|&v| v != 0.0))
            .collect()
    }
}

/// Best single cut over the bin histogram, by the usual second-order gain.
fn best_stump(g: &[f64], h: &[f64], spec: &GamSpec) -> Option<usize> {
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let score = |g: f64, h: f64| g * g / (h + spec.lambda);
    let (mut gl, mut hl) = (0.0, 0.0);
    let mut best: Option<(f64, usize)> = None;
    for b in 0..g.len() - 1 {
        gl += g[b];
        hl += h[b];
        if hl <= 0.0 || ht - hl <= 0.0 {
            continue;
        }
        let gain = score(gl, hl) + score(gt - gl, ht - hl) - score(gt, ht);
        if gain > 1e-12 && best.is_none_or(|(bg, _)| gain > bg) {
            best = Some((gain, b));
        }
    }
    best.map(|(_, b)| b)
}

pub fn fit_gam(x: &DenseMatrix, y: &[u8], spec: &GamSpec) -> Result<AdditiveModel> {
    spec.validate()?;
    check_labels(x, y)?;
    let n = x.n_rows();
    let mut base_score = base_log_odds(y);
    let (cuts, bins) = bin_matrix(x, spec.n_bins);
    let mut shapes: Vec<Vec<f64>> = cuts.iter().map(|c| vec![0.0; c.n_bins()]).collect();
    let mut z = vec![base_score; n];
    for _ in 0..spec.n_cycles {
        for j in 0..x.n_cols() {
            let nb = shapes[j].len();
            if nb < 2 {
                continue;
            }
            let mut g = vec![0.0; nb];
            let mut h = vec![0.0; nb];
            for i in 0..n {
                let p = sigmoid(z[i]);
                let b = bins[j][i] as usize;
                g[b] += p - f64::from(y[i]);
                h[b] += p * (1.0 - p);
            }
            let Some(split) = best_stump(&g, &h, spec) else {
                continue;
            };
            let (gl, hl): (f64, f64) = (g[..=split].iter().sum(), h[..=split].iter().sum());
            let (gr, hr): (f64, f64) = (g[split + 1..].iter().sum(), h[split + 1..].iter().sum());
            let left = -spec.learning_rate * gl / (hl + spec.lambda);
            let right = -spec.learning_rate * gr / (hr + spec.lambda);
            let step: Vec<f64> = (0..nb).map(|b| if b <= split { left } else { right }).collect();
            for (s, d) in shapes[j].iter_mut().zip(&step) {
                *s += d;
            }
            z.par_iter_mut()
                .enumerate()
                .for_each(|(i, zi)| *zi += step[bins[j][i] as usize]);
        }
    }
    let mut importance = vec![0.0; x.n_cols()];
    for j in 0..x.n_cols() {
        let mean = bins[j].iter().map(|&b| shapes[j][b as usize]).sum::<f64>() / n as f64;
        for s in shapes[j].iter_mut() {
            *s -= mean;
        }
        base_score += mean;
        importance[j] = bins[j].iter().map(|&b| shapes[j][b as usize].abs()).sum::<f64>() / n as f64;
    }
    Ok(AdditiveModel {
        n_features: x.n_cols(),
        base_score,
        cuts,
        shapes,
        importance,
        spec: *spec,
    })
}
