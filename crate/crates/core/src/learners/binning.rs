//! Quantile cut points shared by the tree and additive learners.

use serde::{Deserialize, Serialize};

/// Ascending cut points; value `x` falls in bin `b` when
/// `cuts[b-1] < x <= cuts[b]`, so `bin <= b` exactly when `x <= cuts[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuts(pub Vec<f64>);

impl Cuts {
    /// At most `n_bins - 1` cuts drawn from the data itself. Columns with few
    /// distinct values get one bin per value.
    pub fn fit(values: &[f64], n_bins: usize) -> Cuts {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let Some(&max) = sorted.last() else {
            return Cuts(Vec::new());
        };
        if sorted.len() <= n_bins {
            sorted.pop();
            return Cuts(sorted);
        }
        let mut all = values.to_vec();
        all.sort_by(f64::total_cmp);
        let n = all.len();
        let mut cuts: Vec<f64> = Vec::with_capacity(n_bins - 1);
        for k in 1..n_bins {
            let v = all[(k * n / n_bins).min(n - 1)];
            if v < max && cuts.last().is_none_or(|&l| v > l) {
                cuts.push(v);
            }
        }
        Cuts(cuts)
    }

    pub fn n_bins(&self) -> usize {
        self.0.len() + 1
    }

    pub fn bin(&self, x: f64) -> usize {
        self.0.partition_point(|&c| c < x)
    }
}
