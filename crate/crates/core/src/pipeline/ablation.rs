//! Automated ablation study: every arm is tuned with the same optimizer,
//! budget, folds and seed, so arms differ only in the learner they declare.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpo::{hp_importance, run_study, Config, Dimension, Outcome, SearchSpace, StudyConfig, StudyTrace};
use crate::learners::{
    folds_for, partial_dependence, permutation_importance, AlphaWeighting, Classifier, FittedModel, FocalLossParams,
    GamSpec, GbtSpec, LearnerSpec, LossSpec, Metric, PartialDependence,
};
use crate::matrix::DenseMatrix;
use crate::metrics::{compute_metrics, MetricSummary};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "gam")]
    Gam,
    #[serde(rename = "gbt-ce")]
    GbtCe,
    #[serde(rename = "gbt-fl")]
    GbtFl,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Gam => "gam",
            Arm::GbtCe => "gbt-ce",
            Arm::GbtFl => "gbt-fl",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationPlan {
    /// The first arm is the baseline deltas are measured against.
    pub arms: Vec<Arm>,
    pub study: StudyConfig,
    pub cv_folds: usize,
    pub metric: Metric,
    /// Rounds (trees or cycles) granted at the full budget.
    pub max_rounds: usize,
    /// Tree learner dimensions; names are `GbtSpec` fields.
    pub gbt_space: Vec<Dimension>,
    /// Additive learner dimensions; names are `GamSpec` fields.
    pub gam_space: Vec<Dimension>,
    /// Upper end of the focal α interval; the lower end is the minority share.
    pub alpha_max: f64,
    pub gamma_max: f64,
    /// Normal-class weight of the focal arm.
    pub focal_weighting: AlphaWeighting,
    pub importance_repeats: usize,
    /// Partial dependence is exported for this many top features.
    pub pd_features: usize,
    pub pd_grid: usize,
}

impl Default for AblationPlan {
    fn default() -> Self {
        AblationPlan {
            arms: vec![Arm::Gam, Arm::GbtCe, Arm::GbtFl],
            study: StudyConfig::default(),
            cv_folds: 5,
            metric: Metric::F1,
            max_rounds: 200,
            gbt_space: vec![
                Dimension::log_uniform("learning_rate", 0.01, 0.3),
                Dimension::int("max_depth", 2, 6),
                Dimension::log_uniform("min_child_weight", 1e-3, 10.0),
                Dimension::uniform("subsample", 0.5, 1.0),
                Dimension::uniform("colsample", 0.5, 1.0),
                Dimension::log_uniform("lambda", 1e-3, 10.0),
            ],
            gam_space: vec![
                Dimension::log_uniform("learning_rate", 0.01, 0.5),
                Dimension::int("n_bins", 8, 64),
                Dimension::log_uniform("lambda", 1e-3, 10.0),
            ],
            alpha_max: 0.75,
            gamma_max: 5.0,
            focal_weighting: AlphaWeighting::Balanced,
            importance_repeats: 3,
            pd_features: 5,
            pd_grid: 20,
        }
    }
}

const GBT_PARAMS: [&str; 6] = [
    "learning_rate",
    "max_depth",
    "min_child_weight",
    "subsample",
    "colsample",
    "lambda",
];
const GAM_PARAMS: [&str; 3] = ["learning_rate", "n_bins", "lambda"];

impl AblationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.arms.len() < 2 {
            return Err(Error::Config("an ablation needs at least two arms".into()));
        }
        if self.cv_folds < 2 || self.max_rounds == 0 {
            return Err(Error::Config(
                "cv_folds must be at least 2 and max_rounds at least 1".into(),
            ));
        }
        if !(self.alpha_max > 0.5 && self.alpha_max <= 1.0) || !(self.gamma_max >= 0.0) {
            return Err(Error::Config(
                "alpha_max must lie in (0.5, 1] and gamma_max be non-negative".into(),
            ));
        }
        if self.focal_weighting == AlphaWeighting::Balanced && self.alpha_max >= 1.0 {
            return Err(Error::Config("balanced focal weighting needs alpha_max < 1".into()));
        }
        for (space, known) in [(&self.gbt_space, &GBT_PARAMS[..]), (&self.gam_space, &GAM_PARAMS[..])] {
            if let Some(d) = space.iter().find(|d| !known.contains(&d.name.as_str())) {
                return Err(Error::Config(format!("unknown learner hyperparameter {:?}", d.name)));
            }
            SearchSpace::new(space.clone()).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.study.max_budget <= 0.0 {
            return Err(Error::Config("study.max_budget must be positive".into()));
        }
        Ok(())
    }

    /// Search space of one arm; the focal arm adds `alpha` and `gamma`.
    pub fn space(&self, arm: Arm, minority_share: f64) -> Result<SearchSpace> {
        let dims = match arm {
            Arm::Gam => self.gam_space.clone(),
            Arm::GbtCe => self.gbt_space.clone(),
            Arm::GbtFl => {
                let mut d = self.gbt_space.clone();
                d.push(Dimension::uniform(
                    "alpha",
                    minority_share.min(self.alpha_max - 1e-9),
                    self.alpha_max,
                ));
                d.push(Dimension::uniform("gamma", 0.0, self.gamma_max));
                d
            }
        };
        SearchSpace::new(dims)
    }

    /// Learner for a configuration evaluated at `budget`.
    pub fn learner(&self, arm: Arm, c: &Config, budget: f64, model_seed: u64) -> LearnerSpec {
        let rounds = ((self.max_rounds as f64 * budget / self.study.max_budget).round() as usize).max(1);
        let get = |k: &str| c.get(k).and_then(|v| v.as_f64());
        match arm {
            Arm::Gam => {
                let d = GamSpec::default();
                LearnerSpec::Gam(GamSpec {
                    n_cycles: rounds,
                    learning_rate: get("learning_rate").unwrap_or(d.learning_rate),
                    n_bins: get("n_bins").map_or(d.n_bins, |v| v as usize),
                    lambda: get("lambda").unwrap_or(d.lambda),
                })
            }
            Arm::GbtCe | Arm::GbtFl => {
                let d = GbtSpec::default();
                let loss = if arm == Arm::GbtFl {
                    LossSpec::Focal(FocalLossParams {
                        alpha: get("alpha").unwrap_or(0.5),
                        gamma: get("gamma").unwrap_or(2.0),
                        weighting: self.focal_weighting,
                    })
                } else {
                    LossSpec::CrossEntropy
                };
                LearnerSpec::Gbt(GbtSpec {
                    loss,
                    n_rounds: rounds,
                    learning_rate: get("learning_rate").unwrap_or(d.learning_rate),
                    max_depth: get("max_depth").map_or(d.max_depth, |v| v as usize),
                    min_child_weight: get("min_child_weight").unwrap_or(d.min_child_weight),
                    subsample: get("subsample").unwrap_or(d.subsample),
                    colsample: get("colsample").unwrap_or(d.colsample),
                    lambda: get("lambda").unwrap_or(d.lambda),
                    n_bins: d.n_bins,
                    seed: model_seed,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    /// Best cross-validated metric at the full budget.
    pub best_metric: f64,
    pub best_config: Config,
    pub best_learner: LearnerSpec,
    /// `best_metric` minus the baseline arm's.
    pub delta: f64,
    /// Per-fold metric of the best learner refit on fixed folds.
    pub fold_metrics: Vec<f64>,
    /// Standard error of the mean fold metric.
    pub cv_std_error: f64,
    /// Out-of-fold predictions of the best learner, thresholded at 0.5.
    pub oof: MetricSummary,
    pub hp_importance: Option<BTreeMap<String, f64>>,
    pub trace: StudyTrace,
}

fn oof_predictions(
    spec: &LearnerSpec,
    x: &DenseMatrix,
    y: &[u8],
    folds: &[crate::data_model::Fold],
    metric: Metric,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let parts: Vec<(Vec<f64>, f64)> = folds
        .par_iter()
        .map(|f| {
            let ytr: Vec<u8> = f.train.iter().map(|&r| y[r]).collect();
            let yte: Vec<u8> = f.test.iter().map(|&r| y[r]).collect();
            let m = spec.fit(&x.select_rows(&f.train), &ytr)?;
            let p = m.predict_proba(&x.select_rows(&f.test))?;
            let s = metric.score(&yte, &p);
            Ok((p, s))
        })
        .collect::<Result<_>>()?;
    let mut proba = vec![0.0; y.len()];
    let mut scores = Vec::with_capacity(folds.len());
    for (f, (p, s)) in folds.iter().zip(parts) {
        for (&r, v) in f.test.iter().zip(p) {
            proba[r] = v;
        }
        scores.push(s);
    }
    Ok((proba, scores))
}

/// Tunes each arm in plan order. Every arm uses `seed` for its study and
/// its folds.
pub fn run_ablation(plan: &AblationPlan, x: &DenseMatrix, y: &[u8], seed_: u64) -> Result<Vec<ArmResult>> {
    plan.validate()?;
    let pos = y.iter().filter(|&&v| v == 1).count();
    let minority = pos.min(y.len() - pos) as f64 / y.len() as f64;
    let folds = folds_for(y, plan.cv_folds, seed_)?;
    let study = StudyConfig {
        seed: seed_,
        ..plan.study
    };
    let mut out: Vec<ArmResult> = Vec::with_capacity(plan.arms.len());
    for &arm in &plan.arms {
        let space = plan.space(arm, minority)?;
        let objective = |c: &Config, budget: f64, trial_seed: u64| -> Outcome {
            let spec = plan.learner(arm, c, budget, trial_seed);
            crate::learners::cross_validate(&spec, x, y, &folds, plan.metric).map_err(|e| e.to_string())
        };
        let trace = run_study(&objective, &space, &study)?;
        let best = trace
            .trials
            .iter()
            .filter(|t| t.is_completed() && t.budget == trace.max_budget)
            .fold(None, |b: Option<&crate::hpo::TrialRecord>, t| match b {
                Some(b) if b.metric >= t.metric => Some(b),
                _ => Some(t),
            })
            .ok_or_else(|| Error::Stage {
                stage: "classify".into(),
                message: format!("arm {arm} completed no full-budget trial"),
            })?;
        let best_learner = plan.learner(arm, &best.config, trace.max_budget, best.seed);
        let (proba, fold_metrics) = oof_predictions(&best_learner, x, y, &folds, plan.metric)?;
        let k = fold_metrics.len() as f64;
        let mean = fold_metrics.iter().sum::<f64>() / k;
        let sd = (fold_metrics.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        let hp = hp_importance(&trace, &space).ok();
        let best_metric = best.metric.unwrap_or(f64::NAN);
        out.push(ArmResult {
            arm,
            best_metric,
            best_config: best.config.clone(),
            best_learner,
            delta: out.first().map_or(0.0, |b| best_metric - b.best_metric),
            fold_metrics,
            cv_std_error: sd / k.sqrt(),
            oof: compute_metrics(y, &proba, 0.5),
            hp_importance: hp,
            trace,
        });
    }
    Ok(out)
}

/// Index of the winning arm; ties go to the earlier arm.
pub fn winner(results: &[ArmResult]) -> Option<usize> {
    (0..results.len()).fold(None, |b, i| match b {
        Some(b) if results[b].best_metric >= results[i].best_metric => Some(b),
        _ => Some(i),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub name: String,
    /// Split gain (trees) or mean absolute contribution (additive model).
    pub model: f64,
    /// Mean held-out log-loss increase when the feature is shuffled.
    pub permutation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub model: FittedModel,
    pub importance: Vec<FeatureImportance>,
    pub partial_dependence: Vec<PartialDependence>,
}

/// Refits the learner on every row and explains it: model importance from
/// the refit, permutation importance averaged over held-out folds, and
/// partial dependence for the top features by permutation importance.
pub fn explain(
    plan: &AblationPlan,
    spec: &LearnerSpec,
    x: &DenseMatrix,
    y: &[u8],
    names: &[String],
    seed_: u64,
) -> Result<Explanation> {
    let model = spec.fit(x, y)?;
    let folds = folds_for(y, plan.cv_folds, seed_)?;
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let ytr: Vec<u8> = f.train.iter().map(|&r| y[r]).collect();
            let yte: Vec<u8> = f.test.iter().map(|&r| y[r]).collect();
            let m = spec.fit(&x.select_rows(&f.train), &ytr)?;
            permutation_importance(
                &m,
                &x.select_rows(&f.test),
                &yte,
                plan.importance_repeats,
                seed::derive(seed_, k as u64),
            )
        })
        .collect::<Result<_>>()?;
    let model_imp = model.importance();
    let importance: Vec<FeatureImportance> = (0..x.n_cols())
        .map(|j| FeatureImportance {
            feature: j,
            name: names[j].clone(),
            model: model_imp.get(&j).copied().unwrap_or(0.0),
            permutation: per_fold.iter().map(|v| v[j]).sum::<f64>() / per_fold.len() as f64,
        })
        .collect();
    let perm: Vec<f64> = importance.iter().map(|i| i.permutation).collect();
    let partial_dependence = crate::cast::top_k(&perm, plan.pd_features.min(x.n_cols()))
        .into_iter()
        .map(|j| partial_dependence(&model, x, j, plan.pd_grid))
        .collect::<Result<_>>()?;
    Ok(Explanation {
        model,
        importance,
        partial_dependence,
    })
}

pub fn importance_csv(rows: &[FeatureImportance]) -> String {
    let mut s = String::from("feature,name,model_importance,permutation_importance\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.feature,
            csv_field(&r.name),
            r.model,
            r.permutation
        ));
    }
    s
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
