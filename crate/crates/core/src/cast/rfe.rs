//! Recursive feature elimination with cross-validated scoring.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::Fold;
use crate::error::{Error, Result};
use crate::learners::{cross_validate, folds_for, permutation_importance, Classifier, GbtSpec, LearnerSpec, Metric};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfeMode {
    /// Drop the feature with the lowest held-out permutation importance.
    Permutation,
    /// Retrain without each feature and drop the one whose removal scores
    /// best.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfeConfig {
    pub mode: RfeMode,
    pub inner_model: GbtSpec,
    pub cv_folds: usize,
    pub metric: Metric,
    pub permutation_repeats: usize,
    pub seed: u64,
}

impl Default for RfeConfig {
    fn default() -> Self {
        RfeConfig {
            mode: RfeMode::Permutation,
            inner_model: GbtSpec::default(),
            cv_folds: 5,
            metric: Metric::Accuracy,
            permutation_repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    /// Feature ids still in play, ascending.
    pub remaining: Vec<usize>,
    /// Removed after scoring this set; `None` on the final single-feature row.
    pub eliminated: Option<usize>,
    pub cv_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeTrace {
    pub steps: Vec<RfeStep>,
    pub best_subset: Vec<usize>,
    pub best_metric: f64,
}

impl RfeTrace {
    /// Features in elimination order, the survivor last.
    pub fn elimination_order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.steps.iter().filter_map(|s| s.eliminated).collect();
        if let Some(last) = self.steps.last() {
            v.extend(&last.remaining);
        }
        v
    }

    pub fn curve_csv(&self, names: &[String]) -> String {
        let mut s = String::from("n_features,cv_metric,eliminated\n");
        for st in &self.steps {
            let e = st.eliminated.map_or(String::new(), |f| {
                names.get(f).cloned().unwrap_or_else(|| f.to_string())
            });
            s.push_str(&format!("{},{},{}\n", st.remaining.len(), st.cv_metric, e));
        }
        s
    }

    /// `rfe.json` and `rfe_curve.csv`.
    pub fn write(&self, dir: &Path, names: &[String]) -> Result<()> {
        let js = dir.join("rfe.json");
        std::fs::write(&js, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&js, e))?;
        let csv = dir.join("rfe_curve.csv");
        std::fs::write(&csv, self.curve_csv(names)).map_err(|e| Error::io(&csv, e))?;
        Ok(())
    }
}

fn cv(x: &DenseMatrix, y: &[u8], set: &[usize], folds: &[Fold], spec: &LearnerSpec, metric: Metric) -> Result<f64> {
    cross_validate(spec, &x.select_cols(set), y, folds, metric)
}

/// Mean held-out permutation importance per position of `set`.
fn fold_importance(
    x: &DenseMatrix,
    y: &[u8],
    set: &[usize],
    folds: &[Fold],
    spec: &LearnerSpec,
    repeats: usize,
    seed_: u64,
) -> Result<Vec<f64>> {
    let xs = x.select_cols(set);
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let ytr: Vec<u8> = f.train.iter().map(|&r| y[r]).collect();
            let yte: Vec<u8> = f.test.iter().map(|&r| y[r]).collect();
            let m = spec.fit(&xs.select_rows(&f.train), &ytr)?;
            debug_assert_eq!(m.n_features(), set.len());
            permutation_importance(
                &m,
                &xs.select_rows(&f.test),
                &yte,
                repeats,
                crate::seed::derive(seed_, k as u64),
            )
        })
        .collect::<Result<_>>()?;
    Ok((0..set.len())
        .map(|j| per_fold.iter().map(|v| v[j]).sum::<f64>() / folds.len() as f64)
        .collect())
}

/// Eliminates one feature per step until one remains. Feature ids index
/// the columns of `x`; `features` is the starting set.
pub fn rfe(x: &DenseMatrix, y: &[u8], features: &[usize], cfg: &RfeConfig) -> Result<RfeTrace> {
    if features.is_empty() {
        return Err(Error::invalid("RFE needs at least one feature"));
    }
    let folds = folds_for(y, cfg.cv_folds, cfg.seed)?;
    let spec = LearnerSpec::Gbt(GbtSpec {
        seed: cfg.seed,
        ..cfg.inner_model
    });
    let mut set: Vec<usize> = features.to_vec();
    set.sort_unstable();
    set.dedup();
    let mut steps = Vec::with_capacity(set.len());
    while set.len() > 1 {
        let a = cv(x, y, &set, &folds, &spec, cfg.metric)?;
        let victim = match cfg.mode {
            RfeMode::Permutation => {
                let imp = fold_importance(
                    x,
                    y,
                    &set,
                    &folds,
                    &spec,
                    cfg.permutation_repeats,
                    crate::seed::derive(cfg.seed, set.len() as u64),
                )?;
                // lowest importance, ties to the lower id
                (0..set.len()).fold(0, |b, j| if imp[j] < imp[b] { j } else { b })
            }
            RfeMode::Exhaustive => {
                let scores: Vec<f64> = (0..set.len())
                    .into_par_iter()
                    .map(|j| {
                        let mut rest = set.clone();
                        rest.remove(j);
                        cv(x, y, &rest, &folds, &spec, cfg.metric)
                    })
                    .collect::<Result<_>>()?;
                (0..set.len()).fold(0, |b, j| if scores[j] > scores[b] { j } else { b })
            }
        };
        steps.push(RfeStep {
            remaining: set.clone(),
            eliminated: Some(set[victim]),
            cv_metric: a,
        });
        set.remove(victim);
    }
    let a = cv(x, y, &set, &folds, &spec, cfg.metric)?;
    steps.push(RfeStep {
        remaining: set,
        eliminated: None,
        cv_metric: a,
    });
    // best accuracy; ties go to the larger subset, which comes first
    let best = (0..steps.len()).fold(0, |b, i| if steps[i].cv_metric > steps[b].cv_metric { i } else { b });
    Ok(RfeTrace {
        best_subset: steps[best].remaining.clone(),
        best_metric: steps[best].cv_metric,
        steps,
    })
}
