//! Run configuration: one JSON document, unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::AblationPlan;
use crate::anomaly::{DetectorPortfolio, Thresholds};
use crate::cast::{CastConfig, RfeConfig};
use crate::data_model::ProcessDefinition;
use crate::error::{Error, Result};
use crate::feature_factory::ExtractConfig;
use crate::imputation::ImputerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Profile,
    Impute,
    Extract,
    Select,
    Anomaly,
    Classify,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Profile,
        Stage::Impute,
        Stage::Extract,
        Stage::Select,
        Stage::Anomaly,
        Stage::Classify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Profile => "profile",
            Stage::Impute => "impute",
            Stage::Extract => "extract",
            Stage::Select => "select",
            Stage::Anomaly => "anomaly",
            Stage::Classify => "classify",
        }
    }

    /// Stages whose output this one reads when starting from raw data.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Profile | Stage::Impute => &[Stage::Ingest],
            Stage::Extract => &[Stage::Impute],
            Stage::Select | Stage::Anomaly | Stage::Classify => &[Stage::Extract],
        }
    }

    /// Derived seed of this stage under the root seed.
    pub fn seed(self, root: u64) -> u64 {
        crate::seed::derive_str(root, self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// Whitespace-separated data file plus a `label "timestamp"` file.
    Secom { data: PathBuf, labels: PathBuf },
    /// Header row with a `label` column; empty fields are missing.
    Csv { path: PathBuf },
    /// A feature checkpoint written by an earlier run (`<stem>.csv` with a
    /// label column and `<stem>_provenance.json`). Rows listed as anomalous
    /// in `exclude_from` (an `anomaly.csv`) are dropped.
    Features {
        dir: PathBuf,
        #[serde(default = "default_stem")]
        stem: String,
        #[serde(default)]
        exclude_from: Option<PathBuf>,
    },
}

fn default_stem() -> String {
    "features".into()
}

impl InputSpec {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            InputSpec::Secom { data, labels } => {
                fix(data);
                fix(labels);
            }
            InputSpec::Csv { path } => fix(path),
            InputSpec::Features { dir, exclude_from, .. } => {
                fix(dir);
                if let Some(p) = exclude_from {
                    fix(p);
                }
            }
        }
    }

    pub fn is_checkpoint(&self) -> bool {
        matches!(self, InputSpec::Features { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    /// Every column in one unit process.
    Single,
    /// Group columns by the similarity of their missing masks.
    Infer { similarity_threshold: f64 },
    Explicit {
        unit_processes: Vec<Vec<String>>,
        cycles: Vec<usize>,
    },
}

impl Default for ProcessSpec {
    fn default() -> Self {
        ProcessSpec::Infer {
            similarity_threshold: 0.9,
        }
    }
}

impl ProcessSpec {
    pub fn explicit(&self) -> Option<ProcessDefinition> {
        match self {
            ProcessSpec::Explicit { unit_processes, cycles } => Some(ProcessDefinition {
                unit_processes: unit_processes.clone(),
                cycles: cycles.clone(),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub cast: CastConfig,
    /// `None` skips elimination and keeps the CAST selection.
    pub rfe: Option<RfeConfig>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            cast: CastConfig::default(),
            rfe: Some(RfeConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyConfig {
    pub portfolio: DetectorPortfolio,
    pub thresholds: Thresholds,
    /// Replace the thresholds by per-class quantiles of `A_f`.
    pub adaptive_quantile: Option<f64>,
    /// Drop anomalous rows before classifier tuning.
    pub exclude: bool,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            portfolio: DetectorPortfolio::default(),
            thresholds: Thresholds::default(),
            adaptive_quantile: None,
            exclude: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSpec,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    /// Root seed. Stage seeds are derived from it by stage name and replace
    /// any `seed` field inside the module sections.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_report_dir")]
    pub report_dir: PathBuf,
    /// Write `features.csv` after extraction and `selected.csv` after
    /// selection so later stages can restart from them.
    #[serde(default)]
    pub checkpoints: bool,
    #[serde(default)]
    pub variance_threshold: f64,
    #[serde(default)]
    pub process: ProcessSpec,
    #[serde(default)]
    pub imputer: ImputerSpec,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub anomaly: AnomalyConfig,
    #[serde(default)]
    pub classify: AblationPlan,
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn default_report_dir() -> PathBuf {
    PathBuf::from("report")
}

fn config_err(e: impl fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn new(input: InputSpec) -> Self {
        PipelineConfig {
            input,
            stages: all_stages(),
            seed: 0,
            report_dir: default_report_dir(),
            checkpoints: false,
            variance_threshold: 0.0,
            process: ProcessSpec::default(),
            imputer: ImputerSpec::default(),
            extract: ExtractConfig::default(),
            select: SelectConfig::default(),
            anomaly: AnomalyConfig::default(),
            classify: AblationPlan::default(),
        }
    }

    /// Parses JSON; relative paths are taken relative to `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(text).map_err(config_err)?;
        cfg.input.resolve(base);
        if cfg.report_dir.is_relative() {
            cfg.report_dir = base.join(&cfg.report_dir);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn has(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    /// Stage order, prerequisites and every module section.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(config_err("no stages enabled"));
        }
        let mut sorted = self.stages.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.stages.len() {
            return Err(config_err("a stage is listed twice"));
        }
        let checkpoint = self.input.is_checkpoint();
        for &s in &self.stages {
            if checkpoint {
                if s <= Stage::Extract {
                    return Err(config_err(format!(
                        "stage {s} cannot run on a feature checkpoint input"
                    )));
                }
            } else if let Some(p) = s.prerequisites().iter().find(|p| !self.has(**p)) {
                return Err(config_err(format!("stage {s} requires stage {p}")));
            }
        }
        if !(self.variance_threshold >= 0.0) {
            return Err(config_err("variance_threshold must be non-negative"));
        }
        if let ProcessSpec::Infer {
            similarity_threshold: t,
        } = self.process
        {
            if !(t > 0.0 && t <= 1.0) {
                return Err(config_err(format!("similarity_threshold {t} outside (0, 1]")));
            }
        }
        if self.imputer.k_neighbors == 0 {
            return Err(config_err("imputer.k_neighbors must be at least 1"));
        }
        self.extract.validate().map_err(config_err)?;
        if self.has(Stage::Select) {
            self.select.cast.validate().map_err(config_err)?;
            if let Some(r) = &self.select.rfe {
                if r.cv_folds < 2 {
                    return Err(config_err("select.rfe.cv_folds must be at least 2"));
                }
                r.inner_model.validate().map_err(config_err)?;
            }
        }
        if self.has(Stage::Anomaly) {
            self.anomaly.portfolio.validate().map_err(config_err)?;
            self.anomaly.thresholds.validate().map_err(config_err)?;
            if let Some(q) = self.anomaly.adaptive_quantile {
                if !(q > 0.0 && q < 0.5) {
                    return Err(config_err(format!("adaptive_quantile {q} outside (0, 0.5)")));
                }
            }
        }
        if self.has(Stage::Classify) {
            self.classify.validate()?;
        }
        Ok(())
    }
}
