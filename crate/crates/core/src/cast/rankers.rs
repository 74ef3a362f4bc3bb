//! Model-agnostic feature rankers.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::feature_factory::functions::pearson;
use crate::learners::binning::Cuts;
use crate::learners::{feature_importance, fit_gbt, folds_for, permutation_importance, GbtSpec};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerId {
    MutualInformation,
    PearsonAbs,
    TreeSplitGain,
    PermutationImportance,
    L1LinearWeight,
}

impl RankerId {
    pub const ALL: [RankerId; 5] = [
        RankerId::MutualInformation,
        RankerId::PearsonAbs,
        RankerId::TreeSplitGain,
        RankerId::PermutationImportance,
        RankerId::L1LinearWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankerId::MutualInformation => "mutual_information",
            RankerId::PearsonAbs => "pearson_abs",
            RankerId::TreeSplitGain => "tree_split_gain",
            RankerId::PermutationImportance => "permutation_importance",
            RankerId::L1LinearWeight => "l1_linear_weight",
        }
    }
}

impl fmt::Display for RankerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerParams {
    pub mi_bins: usize,
    pub permutation_repeats: usize,
    /// Penalty as a fraction of the smallest penalty that zeroes every weight.
    pub l1_ratio: f64,
    pub model: GbtSpec,
}

impl Default for RankerParams {
    fn default() -> Self {
        RankerParams {
            mi_bins: 10,
            permutation_repeats: 3,
            l1_ratio: 0.05,
            model: GbtSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub ranker: RankerId,
    /// Min-max normalised score per feature.
    pub scores: Vec<f64>,
    pub raw: Vec<f64>,
    /// The `m` best features, best first; ties by ascending id.
    pub top_set: Vec<usize>,
}

impl RankingResult {
    pub fn from_raw(ranker: RankerId, raw: Vec<f64>, m: usize) -> Self {
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scores: Vec<f64> = if raw.is_empty() || hi <= lo {
            vec![0.0; raw.len()]
        } else {
            raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
        };
        let top_set = top_k(&scores, m);
        RankingResult {
            ranker,
            scores,
            raw,
            top_set,
        }
    }

    /// `Rv_f` if the feature is in the top set, else 0.
    pub fn contribution(&self, f: usize) -> f64 {
        if self.top_set.contains(&f) {
            self.scores[f]
        } else {
            0.0
        }
    }
}

/// Indices of the `k` largest values, descending, ties by ascending index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn rank_features(
    x: &DenseMatrix,
    y: &[u8],
    ranker: RankerId,
    m: usize,
    params: &RankerParams,
    seed_: u64,
) -> Result<RankingResult> {
    let mut raw: Vec<f64> = match ranker {
        RankerId::MutualInformation => (0..x.n_cols())
            .into_par_iter()
            .map(|j| mutual_information(x.col(j), y, params.mi_bins))
            .collect(),
        RankerId::PearsonAbs => {
            let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
            (0..x.n_cols())
                .into_par_iter()
                .map(|j| pearson(x.col(j), &yf).abs())
                .collect()
        }
        RankerId::TreeSplitGain => {
            let model = fit_gbt(
                x,
                y,
                &GbtSpec {
                    seed: seed_,
                    ..params.model
                },
            )?;
            let imp = feature_importance(&model);
            (0..x.n_cols()).map(|j| imp.get(&j).copied().unwrap_or(0.0)).collect()
        }
        RankerId::PermutationImportance => {
            let fold = folds_for(y, 5, seed_)?.swap_remove(0);
            let ytr: Vec<u8> = fold.train.iter().map(|&r| y[r]).collect();
            let yte: Vec<u8> = fold.test.iter().map(|&r| y[r]).collect();
            let model = fit_gbt(
                &x.select_rows(&fold.train),
                &ytr,
                &GbtSpec {
                    seed: seed_,
                    ..params.model
                },
            )?;
            permutation_importance(
                &model,
                &x.select_rows(&fold.test),
                &yte,
                params.permutation_repeats,
                seed_,
            )?
        }
        RankerId::L1LinearWeight => l1_logistic(x, y, params.l1_ratio).iter().map(|w| w.abs()).collect(),
    };
    for (j, r) in raw.iter_mut().enumerate() {
        let c = x.col(j);
        if c.iter().all(|&v| v == c[0]) {
            *r = 0.0;
        }
    }
    Ok(RankingResult::from_raw(ranker, raw, m))
}

/// Mutual information (nats) between equal-frequency bins of `x` and `y`.
pub fn mutual_information(x: &[f64], y: &[u8], bins: usize) -> f64 {
    let cuts = Cuts::fit(x, bins);
    let nb = cuts.n_bins();
    let n = x.len() as f64;
    let mut joint = vec![[0.0f64; 2]; nb];
    for (&v, &c) in x.iter().zip(y) {
        joint[cuts.bin(v)][c as usize] += 1.0;
    }
    let py = [0, 1].map(|c| joint.iter().map(|r| r[c]).sum::<f64>() / n);
    let mut mi = 0.0;
    for row in &joint {
        let px = (row[0] + row[1]) / n;
        for c in 0..2 {
            let pxy = row[c] / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (px * py[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// L1-penalised logistic regression on standardised features by cyclic
/// coordinate descent with the curvature bounded by 1/4. Returns weights on
/// the standardised scale; constant features get 0.
pub fn l1_logistic(x: &DenseMatrix, y: &[u8], l1_ratio: f64) -> Vec<f64> {
    let n = x.n_rows();
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let c = x.col(j);
            let m = c.iter().sum::<f64>() / nf;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                c.iter().map(|v| (v - m) / sd).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let ybar = yf.iter().sum::<f64>() / nf;
    let lambda_max = cols
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| c.iter().zip(&yf).map(|(a, b)| a * (b - ybar)).sum::<f64>().abs() / nf)
        .fold(0.0, f64::max);
    let lambda = l1_ratio * lambda_max;
    let mut w = vec![0.0; cols.len()];
    // the intercept lives only inside the linear predictor `z`
    let mut z = vec![(ybar / (1.0 - ybar)).ln(); n];
    let sigmoid = crate::learners::loss::sigmoid::<f64>;
    for _ in 0..100 {
        let mut max_change: f64 = 0.0;
        let g0 = z.iter().zip(&yf).map(|(&zi, &yi)| sigmoid(zi) - yi).sum::<f64>() / nf;
        let db = -g0 / 0.25;
        z.iter_mut().for_each(|zi| *zi += db);
        for (j, c) in cols.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            let g = c
                .iter()
                .zip(&z)
                .zip(&yf)
                .map(|((&xj, &zi), &yi)| xj * (sigmoid(zi) - yi))
                .sum::<f64>()
                / nf;
            // curvature bound 0.25 * mean(x^2) = 0.25 on standardised columns
            let u = w[j] - g / 0.25;
            let new = u.signum() * (u.abs() - lambda / 0.25).max(0.0);
            let d = new - w[j];
            if d != 0.0 {
                for (zi, &xj) in z.iter_mut().zip(c) {
                    *zi += d * xj;
                }
                w[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        if max_change < 1e-6 {
            break;
        }
    }
    w
}
