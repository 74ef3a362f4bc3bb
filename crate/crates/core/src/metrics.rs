//! Binary classification metrics with 1 (failure) as the positive class.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn of(y_true: &[u8], y_pred: &[u8]) -> Confusion {
        let mut c = Confusion::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (1, _) => c.r#fn += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.r#fn)
    }

    /// 0 when there are no true or predicted positives.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.r#fn)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.r#fn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Headline scores of one set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Scores probabilities of the failure class cut at `t` (0.5 by convention).
pub fn compute_metrics(y_true: &[u8], proba: &[f64], t: f64) -> MetricSummary {
    let c = Confusion::of(y_true, &threshold(proba, t));
    MetricSummary {
        threshold: t,
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        confusion: c,
    }
}

pub fn threshold(p: &[f64], t: f64) -> Vec<u8> {
    p.iter().map(|&v| u8::from(v >= t)).collect()
}

pub fn f1(y_true: &[u8], y_pred: &[u8]) -> f64 {
    Confusion::of(y_true, y_pred).f1()
}

pub fn accuracy(y_true: &[u8], y_pred: &[u8]) -> f64 {
    Confusion::of(y_true, y_pred).accuracy()
}

/// Area under the ROC curve with ties counted as one half.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            rank[k] = r;
        }
        i = j + 1;
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count() as f64;
    let neg = y_true.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return 0.5;
    }
    let sum: f64 = y_true.iter().zip(&rank).filter(|(&y, _)| y == 1).map(|(_, r)| r).sum();
    (sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}
