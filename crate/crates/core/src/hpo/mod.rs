//! Hyperparameter search: random sampling, TPE, Hyperband and BOHB with
//! reproducible trial traces.

pub mod hyperband;
pub mod space;
pub mod tpe;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use hyperband::{hyperband_schedule, survivors, Bracket, HyperbandSchedule, Rung};
pub use space::{Config, Dimension, DimensionKind, ParamValue, SearchSpace};
pub use tpe::{tpe_candidates, tpe_suggest, TpeModel, TpeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    /// Shared by every rung evaluation of one configuration.
    pub config_id: u64,
    pub config: Config,
    pub budget: f64,
    pub metric: Option<f64>,
    pub seed: u64,
    pub status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bracket: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rung: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn is_completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }
}

/// Independent draw per dimension, seeded by `(seed, trial_id)`.
pub fn random_suggest(space: &SearchSpace, seed_: u64, trial_id: u64) -> Config {
    let mut rng = seed::rng_for(seed_, trial_id);
    space
        .dimensions()
        .iter()
        .map(|d| (d.name.clone(), d.sample(&mut rng)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Random,
    Tpe,
    Hyperband,
    Bohb,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Random => "random",
            Optimizer::Tpe => "tpe",
            Optimizer::Hyperband => "hyperband",
            Optimizer::Bohb => "bohb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub optimizer: Optimizer,
    /// Full-budget trials for random and TPE.
    pub n_trials: usize,
    /// Passes over the full bracket set for Hyperband and BOHB.
    pub n_sweeps: usize,
    pub max_budget: f64,
    pub eta: usize,
    pub tpe: TpeParams,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            optimizer: Optimizer::Bohb,
            n_trials: 30,
            n_sweeps: 1,
            max_budget: 27.0,
            eta: 3,
            tpe: TpeParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTrace {
    pub optimizer: Optimizer,
    pub seed: u64,
    pub max_budget: f64,
    pub trials: Vec<TrialRecord>,
}

/// One row of the best-so-far curve. `iteration` is cumulative budget in
/// units of the maximum budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub trial_id: u64,
    pub iteration: f64,
    pub best_metric: f64,
}

impl StudyTrace {
    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.is_completed())
    }

    pub fn consumed_budget(&self) -> f64 {
        self.trials.iter().map(|t| t.budget).sum()
    }

    /// Best completed full-budget trial.
    pub fn best(&self) -> Option<&TrialRecord> {
        self.completed()
            .filter(|t| self.is_full(t))
            .fold(None, |acc: Option<&TrialRecord>, t| match acc {
                Some(a) if a.metric >= t.metric => Some(a),
                _ => Some(t),
            })
    }

    fn is_full(&self, t: &TrialRecord) -> bool {
        t.budget >= self.max_budget * (1.0 - 1e-9)
    }

    /// Running best over full-budget trials, one row per trial once any
    /// full-budget trial has completed.
    pub fn best_so_far(&self) -> Vec<BestSoFar> {
        let mut out = Vec::new();
        let mut spent = 0.0;
        let mut best: Option<f64> = None;
        for t in &self.trials {
            spent += t.budget;
            if let (true, Some(m)) = (self.is_full(t), t.metric) {
                best = Some(best.map_or(m, |b: f64| b.max(m)));
            }
            if let Some(b) = best {
                out.push(BestSoFar {
                    trial_id: t.trial_id,
                    iteration: spent / self.max_budget,
                    best_metric: b,
                });
            }
        }
        out
    }

    /// First iteration at which a full-budget trial reached `target`.
    pub fn first_hit(&self, target: f64) -> Option<f64> {
        self.best_so_far()
            .into_iter()
            .find(|b| b.best_metric >= target)
            .map(|b| b.iteration)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.trials {
            writeln!(f, "{}", serde_json::to_string(t)?).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path, optimizer: Optimizer, seed_: u64, max_budget: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let trials = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(StudyTrace {
            optimizer,
            seed: seed_,
            max_budget,
            trials,
        })
    }

    pub fn best_so_far_csv(&self) -> String {
        let mut s = String::from("trial_id,iteration,best_metric\n");
        for b in self.best_so_far() {
            s.push_str(&format!("{},{},{}\n", b.trial_id, b.iteration, b.best_metric));
        }
        s
    }
}

/// Objective result: a metric (higher is better) or a failure message.
pub type Outcome = std::result::Result<f64, String>;

struct Study<'a, F> {
    space: &'a SearchSpace,
    cfg: &'a StudyConfig,
    objective: &'a F,
    trials: Vec<TrialRecord>,
    next_config: u64,
}

impl<F> Study<'_, F>
where
    F: Fn(&Config, f64, u64) -> Outcome + Sync,
{
    fn next_trial_id(&self) -> u64 {
        self.trials.len() as u64
    }

    /// Evaluates a batch; ids are assigned before dispatch so the trace
    /// does not depend on completion order.
    fn evaluate(
        &mut self,
        batch: Vec<(u64, Config)>,
        budget: f64,
        bracket: Option<usize>,
        rung: Option<usize>,
    ) -> Vec<u64> {
        let first = self.next_trial_id();
        let root = self.cfg.seed;
        let objective = self.objective;
        let records: Vec<TrialRecord> = batch
            .into_par_iter()
            .enumerate()
            .map(|(i, (config_id, config))| {
                let trial_id = first + i as u64;
                let seed_ = seed::derive(root, trial_id);
                let (status, metric, error) = match objective(&config, budget, seed_) {
                    Ok(m) if m.is_finite() => (TrialStatus::Completed, Some(m), None),
                    Ok(m) => (TrialStatus::Failed, None, Some(format!("non-finite metric {m}"))),
                    Err(e) => (TrialStatus::Failed, None, Some(e)),
                };
                TrialRecord {
                    trial_id,
                    config_id,
                    config,
                    budget,
                    metric,
                    seed: seed_,
                    status,
                    bracket,
                    rung,
                    error,
                }
            })
            .collect();
        let ids = records.iter().map(|r| r.trial_id).collect();
        self.trials.extend(records);
        ids
    }

    fn new_config_id(&mut self) -> u64 {
        self.next_config += 1;
        self.next_config - 1
    }

    /// TPE history for BOHB: completed trials at the largest budget with at
    /// least `dims + 1` completions.
    fn bohb_history(&self) -> Vec<&TrialRecord> {
        let mut by_budget: BTreeMap<u64, Vec<&TrialRecord>> = BTreeMap::new();
        for t in self.trials.iter().filter(|t| t.is_completed()) {
            by_budget.entry(t.budget.to_bits()).or_default().push(t);
        }
        let need = self.space.len() + 1;
        let mut best: Option<(f64, Vec<&TrialRecord>)> = None;
        for (bits, v) in by_budget {
            let b = f64::from_bits(bits);
            if v.len() >= need && best.as_ref().is_none_or(|(bb, _)| b > *bb) {
                best = Some((b, v));
            }
        }
        best.map(|(_, v)| v).unwrap_or_default()
    }

    fn suggest_batch(&mut self, n: usize, model_based: bool) -> Vec<(u64, Config)> {
        let first = self.next_trial_id();
        let history = if model_based { self.bohb_history() } else { Vec::new() };
        let params = TpeParams {
            n_startup: 0,
            ..self.cfg.tpe
        };
        let configs: Vec<Config> = (0..n as u64)
            .map(|i| {
                if model_based && !history.is_empty() {
                    tpe_suggest(self.space, &history, &params, self.cfg.seed, first + i)
                } else {
                    random_suggest(self.space, self.cfg.seed, first + i)
                }
            })
            .collect();
        configs.into_iter().map(|c| (self.new_config_id(), c)).collect()
    }

    fn run_sequential(&mut self, model_based: bool) {
        for _ in 0..self.cfg.n_trials {
            let id = self.next_trial_id();
            let config = if model_based {
                let history: Vec<&TrialRecord> = self.trials.iter().filter(|t| t.is_completed()).collect();
                tpe_suggest(self.space, &history, &self.cfg.tpe, self.cfg.seed, id)
            } else {
                random_suggest(self.space, self.cfg.seed, id)
            };
            let cid = self.new_config_id();
            self.evaluate(vec![(cid, config)], self.cfg.max_budget, None, None);
        }
    }

    fn run_hyperband(&mut self, schedule: &HyperbandSchedule, model_based: bool) {
        for _ in 0..self.cfg.n_sweeps {
            for bracket in &schedule.brackets {
                let mut batch = self.suggest_batch(bracket.n_configs, model_based);
                for (i, rung) in bracket.rungs.iter().enumerate() {
                    let ids = self.evaluate(batch.clone(), rung.budget, Some(bracket.s), Some(i));
                    let Some(next) = bracket.rungs.get(i + 1) else {
                        break;
                    };
                    let entries: Vec<(u64, Option<f64>)> =
                        ids.iter().map(|&id| (id, self.trials[id as usize].metric)).collect();
                    batch = survivors(&entries, next.n_configs)
                        .into_iter()
                        .map(|k| batch[k].clone())
                        .collect();
                }
            }
        }
    }
}

/// Runs a study; the objective receives `(config, budget, trial_seed)`.
pub fn run_study<F>(objective: &F, space: &SearchSpace, cfg: &StudyConfig) -> Result<StudyTrace>
where
    F: Fn(&Config, f64, u64) -> Outcome + Sync,
{
    if !(cfg.max_budget > 0.0) {
        return Err(Error::invalid("max_budget must be positive"));
    }
    let mut study = Study {
        space,
        cfg,
        objective,
        trials: Vec::new(),
        next_config: 0,
    };
    match cfg.optimizer {
        Optimizer::Random => study.run_sequential(false),
        Optimizer::Tpe => study.run_sequential(true),
        Optimizer::Hyperband | Optimizer::Bohb => {
            let schedule = hyperband_schedule(cfg.max_budget, cfg.eta)?;
            study.run_hyperband(&schedule, cfg.optimizer == Optimizer::Bohb);
        }
    }
    Ok(StudyTrace {
        optimizer: cfg.optimizer,
        seed: cfg.seed,
        max_budget: cfg.max_budget,
        trials: study.trials,
    })
}

/// Share of metric variance explained by each dimension: the weighted
/// variance of per-bin metric means (10 equal-width bins in the internal
/// coordinate, one bin per choice for categorical dimensions), normalised to
/// sum to 1. Uses the largest budget with at least 10 completed trials.
pub fn hp_importance(trace: &StudyTrace, space: &SearchSpace) -> Result<BTreeMap<String, f64>> {
    let mut by_budget: BTreeMap<u64, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trace.completed() {
        by_budget.entry(t.budget.to_bits()).or_default().push(t);
    }
    let trials = by_budget
        .into_iter()
        .rev()
        .map(|(_, v)| v)
        .find(|v| v.len() >= 10)
        .ok_or_else(|| Error::invalid("hp_importance needs at least 10 completed trials at one budget"))?;
    let metrics: Vec<f64> = trials.iter().map(|t| t.metric.unwrap_or(0.0)).collect();
    let n = metrics.len() as f64;
    let grand = metrics.iter().sum::<f64>() / n;
    let mut raw = BTreeMap::new();
    for d in space.dimensions() {
        let (lo, hi) = d.internal_bounds();
        let n_bins = match &d.kind {
            DimensionKind::Categorical { choices } => choices.len(),
            _ => 10,
        };
        let mut sum = vec![0.0; n_bins];
        let mut cnt = vec![0usize; n_bins];
        for (t, &m) in trials.iter().zip(&metrics) {
            let u = t.config.get(&d.name).and_then(|v| d.to_internal(v)).unwrap_or(lo);
            let b = match &d.kind {
                DimensionKind::Categorical { .. } => u as usize,
                _ => (((u - lo) / (hi - lo) * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1),
            };
            sum[b] += m;
            cnt[b] += 1;
        }
        let between: f64 = (0..n_bins)
            .filter(|&b| cnt[b] > 0)
            .map(|b| cnt[b] as f64 * (sum[b] / cnt[b] as f64 - grand).powi(2))
            .sum::<f64>()
            / n;
        raw.insert(d.name.clone(), between);
    }
    let total: f64 = raw.values().sum();
    let k = raw.len() as f64;
    Ok(raw
        .into_iter()
        .map(|(name, v)| (name, if total > 0.0 { v / total } else { 1.0 / k }))
        .collect())
}
