//! Binary classifiers: boosted trees with cross-entropy or focal loss, and a
//! cyclic additive model built from single-feature step functions.

pub mod binning;
pub mod explain;
pub mod gam;
pub mod gbt;
pub mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub use explain::{feature_importance, partial_dependence, permutation_importance, PartialDependence};
pub use gam::{fit_gam, AdditiveModel, GamSpec};
pub use gbt::{fit_gbt, BoostedModel, GbtSpec, Node, Tree};
pub use loss::{loss_value_grad_hess, AlphaWeighting, FocalLossParams, LossSpec, LossTerms};

/// A fitted binary classifier producing a raw log-odds score per row.
pub trait Classifier: Sync {
    fn n_features(&self) -> usize;

    fn raw_score(&self, x: &DenseMatrix, r: usize) -> f64;

    /// Feature indices the model reads, ascending.
    fn used_features(&self) -> Vec<usize>;

    fn predict_proba(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        if x.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| loss::sigmoid(self.raw_score(x, r)))
            .collect())
    }
}

pub(crate) fn check_labels(x: &DenseMatrix, y: &[u8]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::invalid(format!("{} labels for {} rows", y.len(), x.n_rows())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerSpec {
    Gbt(GbtSpec),
    Gam(GamSpec),
}

impl LearnerSpec {
    pub fn fit(&self, x: &DenseMatrix, y: &[u8]) -> Result<FittedModel> {
        match self {
            LearnerSpec::Gbt(s) => fit_gbt(x, y, s).map(FittedModel::Gbt),
            LearnerSpec::Gam(s) => fit_gam(x, y, s).map(FittedModel::Gam),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum FittedModel {
    Gbt(BoostedModel),
    Gam(AdditiveModel),
}

impl FittedModel {
    /// Split gain for trees, mean absolute contribution for the additive model.
    pub fn importance(&self) -> std::collections::BTreeMap<usize, f64> {
        match self {
            FittedModel::Gbt(m) => feature_importance(m),
            FittedModel::Gam(m) => m
                .importance
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, v)| *v > 0.0)
                .collect(),
        }
    }
}

impl Classifier for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Gbt(m) => m.n_features(),
            FittedModel::Gam(m) => m.n_features(),
        }
    }

    fn raw_score(&self, x: &DenseMatrix, r: usize) -> f64 {
        match self {
            FittedModel::Gbt(m) => m.raw_score(x, r),
            FittedModel::Gam(m) => m.raw_score(x, r),
        }
    }

    fn used_features(&self) -> Vec<usize> {
        match self {
            FittedModel::Gbt(m) => m.used_features(),
            FittedModel::Gam(m) => m.used_features(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1,
}

impl Metric {
    /// Scores probabilities thresholded at 0.5.
    pub fn score(&self, y: &[u8], proba: &[f64]) -> f64 {
        let pred = crate::metrics::threshold(proba, 0.5);
        match self {
            Metric::Accuracy => crate::metrics::accuracy(y, &pred),
            Metric::F1 => crate::metrics::f1(y, &pred),
        }
    }
}

/// Stratified folds over 0/1 labels.
pub fn folds_for(y: &[u8], k: usize, seed: u64) -> Result<Vec<crate::data_model::Fold>> {
    let labels: Vec<i8> = y.iter().map(|&v| if v == 1 { 1 } else { -1 }).collect();
    crate::data_model::stratified_folds(&labels, k, seed)
}

/// Mean held-out metric over the folds; folds run in parallel.
pub fn cross_validate(
    spec: &LearnerSpec,
    x: &DenseMatrix,
    y: &[u8],
    folds: &[crate::data_model::Fold],
    metric: Metric,
) -> Result<f64> {
    use rayon::prelude::*;
    let scores: Vec<f64> = folds
        .par_iter()
        .map(|f| {
            let ytr: Vec<u8> = f.train.iter().map(|&r| y[r]).collect();
            let yte: Vec<u8> = f.test.iter().map(|&r| y[r]).collect();
            let m = spec.fit(&x.select_rows(&f.train), &ytr)?;
            Ok(metric.score(&yte, &m.predict_proba(&x.select_rows(&f.test))?))
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
