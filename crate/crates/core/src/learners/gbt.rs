//! Histogram gradient-boosted trees with a pluggable binary loss.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::Cuts;
use super::loss::{loss_value, loss_value_grad_hess, sigmoid, LossSpec};
use super::{check_labels, Classifier};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtSpec {
    pub loss: LossSpec,
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub n_bins: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GbtSpec {
    fn default() -> Self {
        GbtSpec {
            loss: LossSpec::CrossEntropy,
            n_rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_child_weight: 1e-3,
            n_bins: 64,
            subsample: 1.0,
            colsample: 1.0,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl GbtSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if !(2..=256).contains(&self.n_bins) {
            return Err(Error::invalid(format!("n_bins {} outside [2, 256]", self.n_bins)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.min_child_weight >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::invalid("min_child_weight and lambda must be non-negative"));
        }
        for (name, v) in [("subsample", self.subsample), ("colsample", self.colsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} {v} outside (0, 1]")));
            }
        }
        if let LossSpec::Focal(p) = &self.loss {
            p.validate()?;
        }
        Ok(())
    }
}

/// Tree node. Every node keeps the gradient and hessian sums of the
/// training rows that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        grad: f64,
        hess: f64,
    },
    Leaf {
        value: f64,
        grad: f64,
        hess: f64,
    },
}

impl Node {
    pub fn grad_hess(&self) -> (f64, f64) {
        match *self {
            Node::Split { grad, hess, .. } | Node::Leaf { grad, hess, .. } => (grad, hess),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_with(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if value_of(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_with(|f| row[f])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub spec: GbtSpec,
    /// Summed training loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Classifier for BoostedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn raw_score(&self, x: &DenseMatrix, r: usize) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict_with(|f| x.get(r, f))).sum::<f64>()
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Log-odds of the positive rate.
pub(crate) fn base_log_odds(y: &[u8]) -> f64 {
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let p = pos / y.len() as f64;
    (p / (1.0 - p)).ln()
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    cuts: &'a [Cuts],
    grad: &'a [f64],
    hess: &'a [f64],
    features: &'a [usize],
    spec: &'a GbtSpec,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => {
            if y.gain > x.gain || (y.gain == x.gain && y.feature < x.feature) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.spec.lambda)
    }

    fn best_for_feature(&self, f: usize, rows: &[u32], g: f64, h: f64) -> Option<Candidate> {
        let nb = self.cuts[f].n_bins();
        if nb < 2 {
            return None;
        }
        let mut hg = vec![0.0; nb];
        let mut hh = vec![0.0; nb];
        let mut hc = vec![0u32; nb];
        let col = &self.bins[f];
        for &r in rows {
            let b = col[r as usize] as usize;
            hg[b] += self.grad[r as usize];
            hh[b] += self.hess[r as usize];
            hc[b] += 1;
        }
        let parent = self.score(g, h);
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0u32);
        let mut best: Option<Candidate> = None;
        for b in 0..nb - 1 {
            gl += hg[b];
            hl += hh[b];
            cl += hc[b];
            let cr = rows.len() as u32 - cl;
            if cl == 0 || cr == 0 {
                continue;
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < self.spec.min_child_weight || hr < self.spec.min_child_weight {
                continue;
            }
            let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
            if gain > 1e-12 && best.is_none_or(|c| gain > c.gain) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    bin: b,
                });
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();
        let idx = self.nodes.len();
        let leaf = Node::Leaf {
            value: -g / (h + self.spec.lambda) * self.spec.learning_rate,
            grad: g,
            hess: h,
        };
        self.nodes.push(leaf);
        if depth >= self.spec.max_depth || rows.len() < 2 {
            return idx;
        }
        let best = if rows.len() * self.features.len() > 20_000 {
            self.features
                .par_iter()
                .map(|&f| self.best_for_feature(f, &rows, g, h))
                .reduce(|| None, better)
        } else {
            self.features
                .iter()
                .map(|&f| self.best_for_feature(f, &rows, g, h))
                .fold(None, better)
        };
        let Some(c) = best else {
            return idx;
        };
        let col = &self.bins[c.feature];
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = rows.into_iter().partition(|&r| col[r as usize] as usize <= c.bin);
        let left = self.grow(lrows, depth + 1);
        let right = self.grow(rrows, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: c.feature,
            threshold: self.cuts[c.feature].0[c.bin],
            left,
            right,
            gain: c.gain,
            grad: g,
            hess: h,
        };
        idx
    }
}

pub(crate) fn bin_matrix(x: &DenseMatrix, n_bins: usize) -> (Vec<Cuts>, Vec<Vec<u8>>) {
    (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let cuts = Cuts::fit(x.col(j), n_bins);
            let binned = x.col(j).iter().map(|&v| cuts.bin(v) as u8).collect();
            (cuts, binned)
        })
        .unzip()
}

fn sample(n: usize, frac: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    if frac >= 1.0 {
        return (0..n).collect();
    }
    let k = ((frac * n as f64).round() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Fits a boosted ensemble; labels are 0/1 with 1 the failure class.
pub fn fit_gbt(x: &DenseMatrix, y: &[u8], spec: &GbtSpec) -> Result<BoostedModel> {
    spec.validate()?;
    check_labels(x, y)?;
    if let Some(j) = (0..x.n_cols()).find(|&j| x.col(j).iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!("feature {j} has non-finite values")));
    }
    let n = x.n_rows();
    let base_score = base_log_odds(y);
    let (cuts, bins) = bin_matrix(x, spec.n_bins);
    let mut z = vec![base_score; n];
    let total_loss = |z: &[f64]| -> f64 { z.iter().zip(y).map(|(&z, &y)| loss_value(&spec.loss, y, z)).sum() };
    let mut train_loss = vec![total_loss(&z)];
    let mut trees = Vec::with_capacity(spec.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..spec.n_rounds {
        let mut rng = seed::rng_for(spec.seed, round as u64);
        let rows: Vec<u32> = sample(n, spec.subsample, &mut rng)
            .into_iter()
            .map(|r| r as u32)
            .collect();
        let features = sample(x.n_cols(), spec.colsample, &mut rng);
        grad.par_iter_mut()
            .zip(hess.par_iter_mut())
            .enumerate()
            .for_each(|(i, (g, h))| {
                let t = loss_value_grad_hess(&spec.loss, y[i], z[i]);
                *g = t.grad;
                *h = t.hess;
            });
        let mut grower = Grower {
            bins: &bins,
            cuts: &cuts,
            grad: &grad,
            hess: &hess,
            features: &features,
            spec,
            nodes: Vec::new(),
        };
        grower.grow(rows, 0);
        let tree = Tree { nodes: grower.nodes };
        z.par_iter_mut().enumerate().for_each(|(i, zi)| {
            *zi += tree.predict_with(|f| x.get(i, f));
        });
        train_loss.push(total_loss(&z));
        trees.push(tree);
    }
    Ok(BoostedModel {
        n_features: x.n_cols(),
        base_score,
        trees,
        spec: *spec,
        train_loss,
    })
}

/// Probability from a raw score.
pub fn proba(z: f64) -> f64 {
    sigmoid(z)
}
