//! Run report schema and the checksummed artifact manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ablation::Arm;
use super::config::Stage;
use crate::anomaly::AnomalySummary;
use crate::cast::RankerId;
use crate::data_model::DataProfile;
use crate::error::{Error, Result};
use crate::hpo::Config;
use crate::imputation::{DroppedColumn, ImputerMethod};
use crate::metrics::MetricSummary;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSummary {
    pub n_unit_processes: usize,
    pub group_sizes: Vec<usize>,
    pub cycles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationSection {
    pub method: ImputerMethod,
    pub dropped: Vec<DroppedColumn>,
    pub knn_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSection {
    pub n_input_columns: usize,
    pub n_features: usize,
    /// Width predicted by the closed-form count.
    pub expected_features: usize,
    /// Features with at least one undefined value replaced by 0.
    pub n_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSection {
    pub n_candidates: usize,
    pub rankers: Vec<RankerId>,
    pub weights: BTreeMap<RankerId, f64>,
    pub fs: usize,
    pub cast_metric: f64,
    pub weights_converged: bool,
    pub cast_features: Vec<String>,
    pub rfe_best_metric: Option<f64>,
    /// Features passed to the later stages.
    pub final_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySection {
    pub summary: AnomalySummary,
    pub excluded: bool,
    pub n_excluded_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub best_metric: f64,
    pub delta: f64,
    pub cv_std_error: f64,
    pub best_config: Config,
    pub oof: MetricSummary,
    pub hp_importance: Option<BTreeMap<String, f64>>,
    pub n_trials: usize,
    /// Total budget spent, in units of the full budget.
    pub consumed_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSection {
    pub metric: crate::learners::Metric,
    pub n_rows: usize,
    pub n_features: usize,
    pub arms: Vec<ArmSummary>,
    pub winner: Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub status: RunStatus,
    pub failure: Option<StageFailure>,
    pub profile: Option<DataProfile>,
    pub process: Option<ProcessSummary>,
    pub imputation: Option<ImputationSection>,
    pub extraction: Option<ExtractionSection>,
    pub selection: Option<SelectionSection>,
    pub anomaly: Option<AnomalySection>,
    pub classification: Option<ClassificationSection>,
    /// Wall-clock seconds per stage; the only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(seed: u64, stages: Vec<Stage>) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            seed,
            stages,
            status: RunStatus::Ok,
            failure: None,
            profile: None,
            process: None,
            imputation: None,
            extraction: None,
            selection: None,
            anomaly: None,
            classification: None,
            timings: BTreeMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

impl Manifest {
    /// Hashes `files` (paths relative to `dir`), sorted by path.
    pub fn build(dir: &Path, files: &[String]) -> Result<Self> {
        let mut files: Vec<String> = files.to_vec();
        files.sort();
        files.dedup();
        let files = files
            .into_iter()
            .map(|p| {
                let (bytes, sha256) = sha256_file(&dir.join(&p))?;
                Ok(ManifestEntry { path: p, bytes, sha256 })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest {
            schema_version: SCHEMA_VERSION,
            files,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("manifest.json");
        std::fs::write(&p, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join("manifest.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Paths whose current content no longer matches the recorded hash.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|e| sha256_file(&dir.join(&e.path)).map_or(true, |(b, h)| b != e.bytes || h != e.sha256))
            .map(|e| e.path.clone())
            .collect()
    }
}

/// `statistic,value` rows of a profile.
pub fn profile_csv(p: &DataProfile) -> String {
    format!(
        "statistic,value\nn_rows,{}\nn_cols,{}\nn_missing_cells,{}\nn_constant_cols,{}\nn_low_variance_cols,{}\nn_failures,{}\nimbalance_ratio,{}\nvariance_threshold,{}\n",
        p.n_rows, p.n_cols, p.n_missing_cells, p.n_constant_cols, p.n_low_variance_cols, p.n_failures, p.imbalance_ratio, p.variance_threshold
    )
}

/// Human-readable digest of a report.
pub fn render_summary(r: &RunReport) -> String {
    let mut s = format!("status: {:?}\nseed: {}\n", r.status, r.seed);
    if let Some(f) = &r.failure {
        s.push_str(&format!("failed at {}: {}\n", f.stage, f.message));
    }
    if let Some(p) = &r.profile {
        s.push_str(&format!(
            "profile: {} rows, {} columns, {} failures, {} missing cells, {} constant columns\n",
            p.n_rows, p.n_cols, p.n_failures, p.n_missing_cells, p.n_constant_cols
        ));
    }
    if let Some(e) = &r.extraction {
        s.push_str(&format!(
            "extraction: {} features from {} columns\n",
            e.n_features, e.n_input_columns
        ));
    }
    if let Some(sel) = &r.selection {
        s.push_str(&format!(
            "selection: CAST kept {} of {} (metric {:.4}), final set {}\n",
            sel.fs,
            sel.n_candidates,
            sel.cast_metric,
            sel.final_features.len()
        ));
    }
    if let Some(a) = &r.anomaly {
        s.push_str(&format!(
            "anomaly: {} anomalous, {} undetermined of {} rows\n",
            a.summary.anomalous, a.summary.undetermined, a.summary.n_rows
        ));
    }
    if let Some(c) = &r.classification {
        for arm in &c.arms {
            s.push_str(&format!(
                "arm {}: best {:?} {:.4} (delta {:+.4}, se {:.4})\n",
                arm.arm, c.metric, arm.best_metric, arm.delta, arm.cv_std_error
            ));
        }
        s.push_str(&format!("winner: {}\n", c.winner));
    }
    s
}
