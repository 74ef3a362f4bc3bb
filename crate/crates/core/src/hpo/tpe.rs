//! Tree-structured Parzen estimator over independent dimensions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{Config, Dimension, DimensionKind, SearchSpace};
use super::{random_suggest, TrialRecord};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeParams {
    /// Fraction of the history treated as good.
    pub gamma: f64,
    pub n_candidates: usize,
    pub n_startup: usize,
}

impl Default for TpeParams {
    fn default() -> Self {
        TpeParams {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 10,
        }
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Gaussian mixture truncated to `[low, high]`, the first component being a
/// broad prior centred on the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMixture {
    pub low: f64,
    pub high: f64,
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl TruncatedMixture {
    pub fn fit(low: f64, high: f64, obs: &[f64]) -> Self {
        let width = high - low;
        let mut mus = vec![0.5 * (low + high)];
        let mut sigmas = vec![width];
        if !obs.is_empty() {
            let n = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / n;
            let sd = (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let floor = width / (n + 1.0).min(100.0);
            let bw = (sd * n.powf(-0.2)).clamp(floor, width);
            mus.extend_from_slice(obs);
            sigmas.extend(std::iter::repeat_n(bw, obs.len()));
        }
        TruncatedMixture { low, high, mus, sigmas }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.low || x > self.high {
            return 0.0;
        }
        let k = self.mus.len() as f64;
        self.mus
            .iter()
            .zip(&self.sigmas)
            .map(|(&m, &s)| {
                let mass = normal_cdf((self.high - m) / s) - normal_cdf((self.low - m) / s);
                let z = (x - m) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()) / mass.max(1e-300)
            })
            .sum::<f64>()
            / k
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let i = rng.random_range(0..self.mus.len());
        let normal = rand_distr::Normal::new(self.mus[i], self.sigmas[i]).expect("positive bandwidth");
        for _ in 0..64 {
            let v: f64 = rng.sample(normal);
            if v >= self.low && v <= self.high {
                return v;
            }
        }
        self.mus[i].clamp(self.low, self.high)
    }
}

/// Smoothed choice frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDensity {
    pub probs: Vec<f64>,
}

impl CategoricalDensity {
    pub fn fit(k: usize, obs: &[f64]) -> Self {
        let mut counts = vec![1.0; k];
        for &o in obs {
            counts[o as usize] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        CategoricalDensity {
            probs: counts.into_iter().map(|c| c / total).collect(),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Continuous(TruncatedMixture),
    Categorical(CategoricalDensity),
}

impl Density {
    fn fit(dim: &Dimension, obs: &[f64]) -> Self {
        match &dim.kind {
            DimensionKind::Categorical { choices } => Density::Categorical(CategoricalDensity::fit(choices.len(), obs)),
            _ => {
                let (lo, hi) = dim.internal_bounds();
                Density::Continuous(TruncatedMixture::fit(lo, hi, obs))
            }
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        match self {
            Density::Continuous(m) => m.pdf(u),
            Density::Categorical(c) => c.probs[u as usize],
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Density::Continuous(m) => m.sample(rng),
            Density::Categorical(c) => c.sample(rng) as f64,
        }
    }
}

/// Good and bad densities per dimension.
#[derive(Debug, Clone)]
pub struct TpeModel {
    pub space: SearchSpace,
    pub good: Vec<Density>,
    pub bad: Vec<Density>,
}

impl TpeModel {
    /// Splits completed trials at the `gamma` quantile of the metric
    /// (higher is better, ties by trial id).
    pub fn fit(space: &SearchSpace, history: &[&TrialRecord], gamma: f64) -> Self {
        let mut ranked: Vec<&TrialRecord> = history.to_vec();
        ranked.sort_by(|a, b| {
            b.metric
                .unwrap_or(f64::NEG_INFINITY)
                .total_cmp(&a.metric.unwrap_or(f64::NEG_INFINITY))
                .then(a.trial_id.cmp(&b.trial_id))
        });
        let n_good = ((gamma * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len().max(1));
        let (good, bad) = ranked.split_at(n_good.min(ranked.len()));
        let column = |set: &[&TrialRecord], d: &Dimension| -> Vec<f64> {
            set.iter()
                .filter_map(|t| t.config.get(&d.name).and_then(|v| d.to_internal(v)))
                .collect()
        };
        TpeModel {
            space: space.clone(),
            good: space
                .dimensions()
                .iter()
                .map(|d| Density::fit(d, &column(good, d)))
                .collect(),
            bad: space
                .dimensions()
                .iter()
                .map(|d| Density::fit(d, &column(bad, d)))
                .collect(),
        }
    }

    /// `ln l(x) - ln g(x)` summed over dimensions.
    pub fn log_ratio(&self, c: &Config) -> f64 {
        self.space
            .dimensions()
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let u = d.to_internal(&c[&d.name]).expect("config conforms to space");
                self.good[i].pdf(u).max(1e-300).ln() - self.bad[i].pdf(u).max(1e-300).ln()
            })
            .sum()
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Config {
        self.space
            .dimensions()
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.clone(), d.from_internal(self.good[i].sample(rng))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TpeCandidates {
    pub candidates: Vec<Config>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

/// All candidates drawn from the good density with their scores; `None`
/// while the history is below the startup size.
pub fn tpe_candidates(
    space: &SearchSpace,
    history: &[&TrialRecord],
    params: &TpeParams,
    seed_: u64,
    trial_id: u64,
) -> Option<TpeCandidates> {
    if history.len() < params.n_startup.max(2) {
        return None;
    }
    let model = TpeModel::fit(space, history, params.gamma);
    let mut rng = seed::rng_for(seed::derive(seed_, 0x7470_65), trial_id);
    let candidates: Vec<Config> = (0..params.n_candidates.max(1)).map(|_| model.draw(&mut rng)).collect();
    let scores: Vec<f64> = candidates.iter().map(|c| model.log_ratio(c)).collect();
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[chosen] {
            chosen = i;
        }
    }
    Some(TpeCandidates {
        candidates,
        scores,
        chosen,
    })
}

pub fn tpe_suggest(
    space: &SearchSpace,
    history: &[&TrialRecord],
    params: &TpeParams,
    seed_: u64,
    trial_id: u64,
) -> Config {
    match tpe_candidates(space, history, params, seed_, trial_id) {
        Some(mut c) => c.candidates.swap_remove(c.chosen),
        None => random_suggest(space, seed_, trial_id),
    }
}
