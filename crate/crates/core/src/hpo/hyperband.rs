//! Hyperband bracket arithmetic and successive halving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n_configs: usize,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub n_configs: usize,
    pub initial_budget: f64,
    pub rungs: Vec<Rung>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbandSchedule {
    pub max_budget: f64,
    pub eta: usize,
    pub s_max: usize,
    /// Most exploratory bracket first.
    pub brackets: Vec<Bracket>,
}

impl HyperbandSchedule {
    /// Budget spent by one pass over every bracket.
    pub fn total_budget(&self) -> f64 {
        self.brackets
            .iter()
            .flat_map(|b| &b.rungs)
            .map(|r| r.n_configs as f64 * r.budget)
            .sum()
    }

    pub fn n_evaluations(&self) -> usize {
        self.brackets.iter().flat_map(|b| &b.rungs).map(|r| r.n_configs).sum()
    }
}

/// Largest `s` with `eta^s <= r`, by exact integer-style stepping.
fn floor_log(r: f64, eta: usize) -> usize {
    let mut s = 0;
    let mut p = eta as f64;
    while p <= r * (1.0 + 1e-12) {
        s += 1;
        p *= eta as f64;
    }
    s
}

pub fn hyperband_schedule(max_budget: f64, eta: usize) -> Result<HyperbandSchedule> {
    if eta < 2 || !(max_budget >= eta as f64) {
        return Err(Error::invalid(format!(
            "hyperband needs R >= eta >= 2, got R={max_budget}, eta={eta}"
        )));
    }
    let s_max = floor_log(max_budget, eta);
    let e = eta as f64;
    let brackets = (0..=s_max)
        .rev()
        .map(|s| {
            let n = ((s_max + 1) as f64 / (s + 1) as f64 * e.powi(s as i32) - 1e-9).ceil() as usize;
            let r = max_budget * e.powi(-(s as i32));
            let mut rungs = Vec::with_capacity(s + 1);
            let mut k = n;
            for i in 0..=s {
                rungs.push(Rung {
                    n_configs: k,
                    budget: r * e.powi(i as i32),
                });
                k /= eta;
            }
            Bracket {
                s,
                n_configs: n,
                initial_budget: r,
                rungs,
            }
        })
        .collect();
    Ok(HyperbandSchedule {
        max_budget,
        eta,
        s_max,
        brackets,
    })
}

/// Indices of the `keep` best entries; failures (`None`) rank last and ties
/// go to the lower id.
pub fn survivors(entries: &[(u64, Option<f64>)], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&a, &b| {
        let ma = entries[a].1.unwrap_or(f64::NEG_INFINITY);
        let mb = entries[b].1.unwrap_or(f64::NEG_INFINITY);
        mb.total_cmp(&ma).then(entries[a].0.cmp(&entries[b].0))
    });
    idx.truncate(keep);
    idx
}
