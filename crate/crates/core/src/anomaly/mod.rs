//! Ensemble anomaly screening. Detectors vote per row; the abnormal factor
//! `A_f = Y * P / N` compares failure-like votes `P` with normal votes `N`,
//! signed by the label `Y`.

pub mod detectors;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_factory::operations::percentile;
use crate::matrix::DenseMatrix;

pub use detectors::DetectorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorPortfolio {
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DetectorPortfolio {
    /// Twelve variants over six families.
    fn default() -> Self {
        use DetectorSpec::*;
        DetectorPortfolio {
            detectors: vec![
                Kmeans { k: 2 },
                Kmeans { k: 3 },
                Kmeans { k: 4 },
                IsolationForest { contamination: 0.05 },
                IsolationForest { contamination: 0.1 },
                Lof { k: 10 },
                Lof { k: 20 },
                Mahalanobis { quantile: 0.95 },
                Mahalanobis { quantile: 0.975 },
                HistogramOutlier {
                    bins: 10,
                    quantile: 0.95,
                },
                HistogramOutlier {
                    bins: 20,
                    quantile: 0.9,
                },
                PcaReconstruction { threshold: 0.9 },
            ],
            seed: 0,
        }
    }
}

impl DetectorPortfolio {
    pub fn validate(&self) -> Result<()> {
        if self.detectors.len() < 2 {
            return Err(Error::invalid("a portfolio needs at least two detectors"));
        }
        for d in &self.detectors {
            let ok = match *d {
                DetectorSpec::Kmeans { k } => k >= 2,
                DetectorSpec::IsolationForest { contamination } => contamination > 0.0 && contamination < 0.5,
                DetectorSpec::Lof { k } => k >= 1,
                DetectorSpec::Mahalanobis { quantile } => quantile > 0.0 && quantile < 1.0,
                DetectorSpec::HistogramOutlier { bins, quantile } => bins >= 2 && quantile > 0.0 && quantile < 1.0,
                DetectorSpec::PcaReconstruction { threshold } => threshold > 0.0 && threshold <= 1.0,
            };
            if !ok {
                return Err(Error::invalid(format!("invalid detector parameters: {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abstention {
    pub detector: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub p: Vec<u32>,
    pub n: Vec<u32>,
    /// Detectors that voted.
    pub l: u32,
    pub abstained: Vec<Abstention>,
}

impl VoteTally {
    pub fn from_votes(votes: &[Vec<i8>]) -> Self {
        let rows = votes.first().map_or(0, Vec::len);
        let mut p = vec![0; rows];
        let mut n = vec![0; rows];
        for v in votes {
            for (i, &x) in v.iter().enumerate() {
                if x > 0 {
                    p[i] += 1;
                } else {
                    n[i] += 1;
                }
            }
        }
        VoteTally {
            p,
            n,
            l: votes.len() as u32,
            abstained: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Columns scaled to zero mean and unit variance; constant columns dropped.
pub fn standardize(x: &DenseMatrix) -> Vec<Vec<f64>> {
    let n = x.n_rows();
    let keep: Vec<(usize, f64, f64)> = (0..x.n_cols())
        .filter_map(|j| {
            let c = x.col(j);
            let m = c.iter().sum::<f64>() / n as f64;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            (sd > 1e-12 * m.abs().max(1.0)).then_some((j, m, sd))
        })
        .collect();
    (0..n)
        .map(|i| keep.iter().map(|&(j, m, sd)| (x.get(i, j) - m) / sd).collect())
        .collect()
}

pub fn fit_predict_portfolio(x: &DenseMatrix, portfolio: &DetectorPortfolio) -> Result<VoteTally> {
    portfolio.validate()?;
    if let Some(j) = (0..x.n_cols()).find(|&j| x.col(j).iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!("feature {j} has non-finite values")));
    }
    let rows = standardize(x);
    let outcomes: Vec<(String, detectors::Votes)> = portfolio
        .detectors
        .par_iter()
        .map(|d| (d.to_string(), detectors::run_detector(d, &rows, portfolio.seed)))
        .collect();
    let mut votes = Vec::new();
    let mut abstained = Vec::new();
    for (name, o) in outcomes {
        match o {
            Ok(v) => votes.push(v),
            Err(reason) => {
                log::warn!("detector {name} abstains: {reason}");
                abstained.push(Abstention { detector: name, reason });
            }
        }
    }
    let mut tally = VoteTally::from_votes(&votes);
    if votes.is_empty() {
        tally.p = vec![0; x.n_rows()];
        tally.n = vec![0; x.n_rows()];
    }
    tally.abstained = abstained;
    Ok(tally)
}

/// `Y * P / N`, with the ratio saturating at `L` when `N = 0`.
pub fn abnormal_factor_one(y: i8, p: u32, n: u32, l: u32) -> f64 {
    let ratio = if n == 0 { l as f64 } else { p as f64 / n as f64 };
    f64::from(y) * ratio
}

pub fn abnormal_factor(tally: &VoteTally, labels: &[i8]) -> Result<Vec<f64>> {
    if labels.len() != tally.len() {
        return Err(Error::invalid(format!(
            "{} labels for {} tallies",
            labels.len(),
            tally.len()
        )));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::invalid("labels must be -1 or +1"));
    }
    Ok((0..labels.len())
        .map(|i| abnormal_factor_one(labels[i], tally.p[i], tally.n[i], tally.l))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub t_normal: f64,
    pub t_failure: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            t_normal: -5.0,
            t_failure: 0.1,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_normal < 0.0 && self.t_failure > 0.0) {
            return Err(Error::invalid(format!(
                "thresholds need t_normal < 0 < t_failure, got {} and {}",
                self.t_normal, self.t_failure
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Normal,
    Anomalous,
    Undetermined,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Normal => "normal",
            Level::Anomalous => "anomalous",
            Level::Undetermined => "undetermined",
        })
    }
}

pub fn level_of(y: i8, af: f64, p: u32, n: u32, t: &Thresholds) -> Level {
    if p == n {
        Level::Undetermined
    } else if (y == -1 && af < t.t_normal) || (y == 1 && af > 0.0 && af < t.t_failure) {
        Level::Anomalous
    } else {
        Level::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub labels: Vec<i8>,
    pub p: Vec<u32>,
    pub n: Vec<u32>,
    pub af: Vec<f64>,
    pub levels: Vec<Level>,
    /// Quartile (1 to 4) of `|A_f|` among anomalous rows.
    pub severity: Vec<Option<u8>>,
    pub thresholds: Thresholds,
    pub excluded_rows: Vec<usize>,
    pub n_detectors: u32,
    pub abstained: Vec<Abstention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySummary {
    pub n_rows: usize,
    pub normal: usize,
    pub anomalous: usize,
    pub undetermined: usize,
    pub anomalous_by_label: [usize; 2],
    pub severity_counts: [usize; 4],
    pub thresholds: Thresholds,
    pub n_detectors: u32,
    pub abstained: Vec<Abstention>,
}

pub fn classify_levels(af: &[f64], labels: &[i8], tally: &VoteTally, thresholds: &Thresholds) -> Result<AnomalyReport> {
    thresholds.validate()?;
    if af.len() != labels.len() || af.len() != tally.len() {
        return Err(Error::invalid("A_f, labels and tally lengths differ"));
    }
    let levels: Vec<Level> = (0..af.len())
        .map(|i| level_of(labels[i], af[i], tally.p[i], tally.n[i], thresholds))
        .collect();
    let excluded_rows: Vec<usize> = (0..af.len()).filter(|&i| levels[i] == Level::Anomalous).collect();
    let mags: Vec<f64> = excluded_rows.iter().map(|&i| af[i].abs()).collect();
    let mut severity = vec![None; af.len()];
    if !mags.is_empty() {
        let q = [percentile(&mags, 0.25), percentile(&mags, 0.5), percentile(&mags, 0.75)];
        for &i in &excluded_rows {
            let m = af[i].abs();
            severity[i] = Some(1 + q.iter().filter(|&&c| m > c).count() as u8);
        }
    }
    Ok(AnomalyReport {
        labels: labels.to_vec(),
        p: tally.p.clone(),
        n: tally.n.clone(),
        af: af.to_vec(),
        levels,
        severity,
        thresholds: *thresholds,
        excluded_rows,
        n_detectors: tally.l,
        abstained: tally.abstained.clone(),
    })
}

/// Per-class quantiles of `A_f`; a class with no usable values keeps its
/// default threshold.
pub fn adaptive_thresholds(af: &[f64], labels: &[i8], target_quantile: f64) -> Result<Thresholds> {
    if !(target_quantile > 0.0 && target_quantile < 0.5) {
        return Err(Error::invalid(format!(
            "target quantile {target_quantile} outside (0, 0.5)"
        )));
    }
    let defaults = Thresholds::default();
    let normals: Vec<f64> = af
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == -1)
        .map(|(&a, _)| a)
        .collect();
    let failures: Vec<f64> = af
        .iter()
        .zip(labels)
        .filter(|(&a, &y)| y == 1 && a > 0.0)
        .map(|(&a, _)| a)
        .collect();
    let t_normal = if normals.is_empty() {
        log::warn!("no normal samples; keeping t_normal = {}", defaults.t_normal);
        defaults.t_normal
    } else {
        percentile(&normals, target_quantile)
    };
    let t_failure = if failures.is_empty() {
        log::warn!(
            "no failure samples with positive A_f; keeping t_failure = {}",
            defaults.t_failure
        );
        defaults.t_failure
    } else {
        percentile(&failures, target_quantile)
    };
    Ok(Thresholds { t_normal, t_failure })
}

impl AnomalyReport {
    pub fn summary(&self) -> AnomalySummary {
        let count = |l: Level| self.levels.iter().filter(|&&x| x == l).count();
        let mut by_label = [0; 2];
        let mut sev = [0; 4];
        for &i in &self.excluded_rows {
            by_label[usize::from(self.labels[i] == 1)] += 1;
            if let Some(s) = self.severity[i] {
                sev[s as usize - 1] += 1;
            }
        }
        AnomalySummary {
            n_rows: self.levels.len(),
            normal: count(Level::Normal),
            anomalous: count(Level::Anomalous),
            undetermined: count(Level::Undetermined),
            anomalous_by_label: by_label,
            severity_counts: sev,
            thresholds: self.thresholds,
            n_detectors: self.n_detectors,
            abstained: self.abstained.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,label,p,n,a_f,level,severity\n");
        for i in 0..self.levels.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i,
                self.labels[i],
                self.p[i],
                self.n[i],
                self.af[i],
                self.levels[i],
                self.severity[i].map_or(String::new(), |v| v.to_string())
            ));
        }
        s
    }

    /// Writes `anomaly.csv` and `anomaly_summary.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let csv = dir.join("anomaly.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let js = dir.join("anomaly_summary.json");
        std::fs::write(&js, serde_json::to_string_pretty(&self.summary())?).map_err(|e| Error::io(&js, e))?;
        Ok(())
    }
}
