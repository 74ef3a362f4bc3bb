//! Weighted multi-ranker feature selection followed by recursive feature
//! elimination.
//!
//! Each ranker scores every feature; scores are min-max normalised and the
//! top `m` kept. The total weighted score of a feature is
//! `T_ws(f) = sum_a W_a * Rv_f(a)`, with `Rv_f(a) = 0` outside ranker `a`'s
//! top set. A TPE search over the weights and the kept count `Fs` picks the
//! combination with the best cross-validated inner-model metric.

pub mod rankers;
pub mod rfe;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpo::{run_study, Config, Dimension, Optimizer, SearchSpace, StudyConfig, TpeParams};
use crate::learners::{cross_validate, folds_for, GbtSpec, LearnerSpec, Metric};
use crate::matrix::DenseMatrix;

pub use rankers::{rank_features, top_k, RankerId, RankerParams, RankingResult};
pub use rfe::{rfe, RfeConfig, RfeMode, RfeStep, RfeTrace};

/// `|M_a ∩ M_b| / m`.
pub fn overlap_rate(a: &RankingResult, b: &RankingResult) -> f64 {
    let m = a.top_set.len().max(b.top_set.len());
    if m == 0 {
        return 0.0;
    }
    let shared = a.top_set.iter().filter(|f| b.top_set.contains(f)).count();
    shared as f64 / m as f64
}

/// Greedy low-overlap subset of `k` rankers: the least-overlapping pair
/// first, then whichever ranker has the lowest mean overlap with those
/// already chosen. Ties follow the input order. Returns input positions.
pub fn select_rankers(results: &[RankingResult], k: usize) -> Result<Vec<usize>> {
    let r = results.len();
    if k > r {
        return Err(Error::invalid(format!("cannot select {k} of {r} rankers")));
    }
    if k == r {
        return Ok((0..r).collect());
    }
    if k < 2 {
        return Err(Error::invalid("at least two rankers must be selected"));
    }
    let ov: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..r).map(|j| overlap_rate(&results[i], &results[j])).collect())
        .collect();
    let mut best = (0, 1);
    for i in 0..r {
        for j in i + 1..r {
            if ov[i][j] < ov[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    let mut chosen = vec![best.0, best.1];
    while chosen.len() < k {
        let next = (0..r)
            .filter(|c| !chosen.contains(c))
            .map(|c| (chosen.iter().map(|&s| ov[c][s]).sum::<f64>() / chosen.len() as f64, c))
            .fold(None, |acc: Option<(f64, usize)>, x| match acc {
                Some(a) if a.0 <= x.0 => Some(a),
                _ => Some(x),
            })
            .unwrap()
            .1;
        chosen.push(next);
    }
    Ok(chosen)
}

/// `T_ws` per feature. Weights must be non-negative and sum to 1.
pub fn weighted_total_score(results: &[&RankingResult], weights: &[f64]) -> Result<Vec<f64>> {
    if results.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} rankers",
            weights.len(),
            results.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights must be non-negative and sum to 1"));
    }
    let n = results.first().map_or(0, |r| r.scores.len());
    let mut t = vec![0.0; n];
    for (r, &w) in results.iter().zip(weights) {
        for &f in &r.top_set {
            t[f] += w * r.scores[f];
        }
    }
    Ok(t)
}

/// Scales weights to sum 1; all-zero weights become uniform.
pub fn normalize_weights(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / w.len() as f64; w.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CastConfig {
    pub rankers: Vec<RankerId>,
    /// How many rankers to keep after the overlap screen; all when unset.
    pub k_select: Option<usize>,
    pub m: usize,
    pub iterations: usize,
    pub fs_range: [usize; 2],
    pub weight_range: [f64; 2],
    pub inner_model: GbtSpec,
    pub cv_folds: usize,
    pub metric: Metric,
    pub ranker_params: RankerParams,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    pub seed: u64,
}

impl Default for CastConfig {
    fn default() -> Self {
        CastConfig {
            rankers: RankerId::ALL.to_vec(),
            k_select: None,
            m: 200,
            iterations: 30,
            fs_range: [5, 100],
            weight_range: [0.0, 1.0],
            inner_model: GbtSpec::default(),
            cv_folds: 5,
            metric: Metric::Accuracy,
            ranker_params: RankerParams::default(),
            convergence_window: 5,
            convergence_threshold: 1e-3,
            seed: 0,
        }
    }
}

impl CastConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = self.rankers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.rankers.len() || self.rankers.len() < 2 {
            return Err(Error::invalid("CAST needs at least two distinct rankers"));
        }
        if let Some(k) = self.k_select {
            if k < 2 || k > self.rankers.len() {
                return Err(Error::invalid(format!(
                    "k_select {k} outside [2, {}]",
                    self.rankers.len()
                )));
            }
        }
        if self.iterations == 0 || self.m == 0 {
            return Err(Error::invalid("iterations and m must be at least 1"));
        }
        if self.fs_range[0] == 0 || self.fs_range[0] > self.fs_range[1] {
            return Err(Error::invalid(format!("bad fs_range {:?}", self.fs_range)));
        }
        let [lo, hi] = self.weight_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::invalid(format!("bad weight_range {:?}", self.weight_range)));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("cv_folds must be at least 2"));
        }
        self.inner_model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastIteration {
    pub iteration: usize,
    pub weights: Vec<f64>,
    pub fs: usize,
    pub metric: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConvergence {
    pub window: usize,
    /// Variance of each best-so-far weight over the last `window` iterations.
    pub variance: Vec<f64>,
    pub threshold: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastSolution {
    pub rankers: Vec<RankerId>,
    pub overlap: Vec<Vec<f64>>,
    pub selected_features: Vec<usize>,
    pub selected_names: Vec<String>,
    pub weights: BTreeMap<RankerId, f64>,
    pub fs: usize,
    pub best_metric: f64,
    pub tws: Vec<f64>,
    pub search_trace: Vec<CastIteration>,
    pub convergence: WeightConvergence,
}

fn weight_dim(r: RankerId) -> String {
    format!("w_{}", r.name())
}

pub fn rank_all(x: &DenseMatrix, y: &[u8], cfg: &CastConfig) -> Result<Vec<RankingResult>> {
    use rayon::prelude::*;
    cfg.rankers
        .par_iter()
        .map(|&r| {
            rank_features(
                x,
                y,
                r,
                cfg.m,
                &cfg.ranker_params,
                crate::seed::derive_str(cfg.seed, r.name()),
            )
        })
        .collect()
}

/// Full search: rank, screen rankers by overlap, then tune weights and `Fs`.
pub fn cast_search(x: &DenseMatrix, y: &[u8], names: &[String], cfg: &CastConfig) -> Result<CastSolution> {
    cfg.validate()?;
    let results = rank_all(x, y, cfg)?;
    cast_search_with(x, y, names, cfg, &results)
}

/// Search over precomputed rankings (one per entry of `cfg.rankers`).
pub fn cast_search_with(
    x: &DenseMatrix,
    y: &[u8],
    names: &[String],
    cfg: &CastConfig,
    results: &[RankingResult],
) -> Result<CastSolution> {
    cfg.validate()?;
    if names.len() != x.n_cols() {
        return Err(Error::invalid("one name per feature is required"));
    }
    let chosen = select_rankers(results, cfg.k_select.unwrap_or(results.len()))?;
    let used: Vec<&RankingResult> = chosen.iter().map(|&i| &results[i]).collect();
    let overlap = used
        .iter()
        .map(|a| used.iter().map(|b| overlap_rate(a, b)).collect())
        .collect();

    let fs_hi = cfg.fs_range[1].min(x.n_cols()).max(1);
    let fs_lo = cfg.fs_range[0].min(fs_hi);
    let mut dims: Vec<Dimension> = used
        .iter()
        .map(|r| Dimension::uniform(&weight_dim(r.ranker), cfg.weight_range[0], cfg.weight_range[1]))
        .collect();
    dims.push(Dimension::int("fs", fs_lo as i64, fs_hi as i64));
    let space = SearchSpace::new(dims)?;

    let folds = folds_for(y, cfg.cv_folds, cfg.seed)?;
    let inner = LearnerSpec::Gbt(GbtSpec {
        seed: cfg.seed,
        ..cfg.inner_model
    });
    let decode = |c: &Config| -> (Vec<f64>, usize) {
        let w: Vec<f64> = used
            .iter()
            .map(|r| c[&weight_dim(r.ranker)].as_f64().unwrap_or(0.0))
            .collect();
        (normalize_weights(&w), c["fs"].as_f64().unwrap_or(1.0) as usize)
    };
    let selection = |w: &[f64], fs: usize| -> Result<(Vec<f64>, Vec<usize>)> {
        let t = weighted_total_score(&used, w)?;
        let top = top_k(&t, fs);
        Ok((t, top))
    };
    let objective = |c: &Config, _budget: f64, _seed: u64| -> crate::hpo::Outcome {
        let (w, fs) = decode(c);
        let (_, top) = selection(&w, fs).map_err(|e| e.to_string())?;
        cross_validate(&inner, &x.select_cols(&top), y, &folds, cfg.metric).map_err(|e| e.to_string())
    };
    let study = StudyConfig {
        optimizer: Optimizer::Tpe,
        n_trials: cfg.iterations,
        max_budget: 1.0,
        tpe: TpeParams {
            n_startup: (cfg.iterations / 3).clamp(2, 10),
            ..TpeParams::default()
        },
        seed: cfg.seed,
        ..StudyConfig::default()
    };
    // sequential trials keep inner parallelism for the folds
    let trace = run_study(&objective, &space, &study)?;

    let mut search_trace = Vec::with_capacity(trace.trials.len());
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut best_weights_history = Vec::new();
    for (i, t) in trace.trials.iter().enumerate() {
        let (w, fs) = decode(&t.config);
        let metric = t.metric.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| metric > b.0) {
            best = Some((metric, w.clone(), fs));
        }
        let b = best.as_ref().unwrap();
        best_weights_history.push(b.1.clone());
        search_trace.push(CastIteration {
            iteration: i,
            weights: w,
            fs,
            metric,
            best_so_far: b.0,
        });
    }
    let (best_metric, w, fs) = best.ok_or_else(|| Error::invalid("CAST search produced no trials"))?;
    let (tws, selected_features) = selection(&w, fs)?;

    let window = cfg.convergence_window.max(1).min(best_weights_history.len());
    let tail = &best_weights_history[best_weights_history.len() - window..];
    let variance: Vec<f64> = (0..w.len())
        .map(|a| {
            let m = tail.iter().map(|v| v[a]).sum::<f64>() / window as f64;
            tail.iter().map(|v| (v[a] - m).powi(2)).sum::<f64>() / window as f64
        })
        .collect();
    let converged = variance.iter().all(|&v| v <= cfg.convergence_threshold);
    if !converged {
        log::warn!("CAST weights have not settled over the last {window} iterations");
    }
    Ok(CastSolution {
        rankers: used.iter().map(|r| r.ranker).collect(),
        overlap,
        selected_names: selected_features.iter().map(|&f| names[f].clone()).collect(),
        selected_features,
        weights: used.iter().map(|r| r.ranker).zip(w.iter().copied()).collect(),
        fs,
        best_metric,
        tws,
        search_trace,
        convergence: WeightConvergence {
            window,
            variance,
            threshold: cfg.convergence_threshold,
            converged,
        },
    })
}

impl CastSolution {
    /// One row per search iteration: weights, `Fs`, metric, running best.
    pub fn weights_csv(&self) -> String {
        let mut s = String::from("iteration");
        for r in &self.rankers {
            s.push_str(&format!(",w_{}", r.name()));
        }
        s.push_str(",fs,metric,best_so_far\n");
        for it in &self.search_trace {
            s.push_str(&it.iteration.to_string());
            for w in &it.weights {
                s.push_str(&format!(",{w}"));
            }
            s.push_str(&format!(",{},{},{}\n", it.fs, it.metric, it.best_so_far));
        }
        s
    }

    /// `cast_solution.json` and `cast_weights.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let js = dir.join("cast_solution.json");
        std::fs::write(&js, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&js, e))?;
        let csv = dir.join("cast_weights.csv");
        std::fs::write(&csv, self.weights_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok(())
    }
}
