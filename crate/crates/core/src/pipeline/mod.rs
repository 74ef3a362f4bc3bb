//! End-to-end orchestration: ingest → profile → impute → extract → select
//! (CAST then RFE) → anomaly screening → classifier ablation → report.
//!
//! Each stage seed is `seed::derive_str(root, stage_name)`. A failing stage
//! stops the run; the report written so far is still exported with status
//! `failed`.

pub mod ablation;
pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::anomaly::{
    abnormal_factor, adaptive_thresholds, classify_levels, fit_predict_portfolio, DetectorPortfolio, Level,
};
use crate::cast::{cast_search, rfe, CastConfig, RfeConfig};
use crate::data_model::{self, ProcessDefinition};
use crate::error::{Error, Result};
use crate::feature_factory::{expected_feature_count, extract_all, FeatureMatrix};
use crate::imputation::fit_impute;
use crate::matrix::{binary_labels, DenseMatrix};
use crate::Dataset;

pub use ablation::{
    explain, importance_csv, run_ablation, winner, AblationPlan, Arm, ArmResult, Explanation, FeatureImportance,
};
pub use config::{AnomalyConfig, InputSpec, PipelineConfig, ProcessSpec, SelectConfig, Stage};
pub use report::{
    profile_csv, render_summary, Manifest, ManifestEntry, RunReport, RunStatus, StageFailure, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Stage,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Stage => 4,
        }
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub kind: FailureKind,
    pub error: Error,
    /// Partial report, when the run got far enough to write one.
    pub report: Option<RunReport>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {}

fn fail(kind: FailureKind, error: Error) -> RunFailure {
    RunFailure {
        kind,
        error,
        report: None,
    }
}

/// Working data handed from stage to stage.
struct State {
    dataset: Option<Dataset>,
    process: Option<ProcessDefinition>,
    imputed: Option<Dataset>,
    features: Option<FeatureMatrix<f64>>,
    /// Labels matching the rows of `features`.
    labels: Vec<i8>,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    report: RunReport,
    files: Vec<String>,
    state: State,
}

impl Runner<'_> {
    fn write(&mut self, rel: &str, content: impl AsRef<[u8]>) -> Result<()> {
        let p = self.out.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn note(&mut self, rel: &[&str]) {
        self.files.extend(rel.iter().map(|s| s.to_string()));
    }

    fn seed(&self, s: Stage) -> u64 {
        s.seed(self.cfg.seed)
    }

    fn ingest(&mut self) -> Result<()> {
        match &self.cfg.input {
            InputSpec::Secom { data, labels } => {
                self.state.dataset = Some(data_model::load_secom(data, labels)?);
            }
            InputSpec::Csv { path } => {
                self.state.dataset = Some(data_model::load_csv(path)?);
            }
            InputSpec::Features {
                dir,
                stem,
                exclude_from,
            } => {
                let (fm, labels) = FeatureMatrix::<f64>::read(dir, stem)?;
                let labels = labels.ok_or_else(|| Error::Structure(format!("{stem}.csv has no label column")))?;
                let (fm, labels) = match exclude_from {
                    Some(p) => {
                        let drop = read_anomalous_rows(p)?;
                        let keep: Vec<usize> = (0..fm.n_rows()).filter(|r| !drop.contains(r)).collect();
                        (fm.select_rows(&keep), keep.iter().map(|&r| labels[r]).collect())
                    }
                    None => (fm, labels),
                };
                self.state.features = Some(fm);
                self.state.labels = labels;
            }
        }
        Ok(())
    }

    fn profile(&mut self) -> Result<()> {
        let d = self.state.dataset.as_ref().expect("ingest ran");
        let p = data_model::profile(d, self.cfg.variance_threshold);
        self.write("profile.csv", profile_csv(&p))?;
        self.report.profile = Some(p);
        Ok(())
    }

    fn impute(&mut self) -> Result<()> {
        let d = self.state.dataset.as_ref().expect("ingest ran");
        let proc = match &self.cfg.process {
            ProcessSpec::Single => ProcessDefinition::single_group(d.column_ids()),
            ProcessSpec::Infer { similarity_threshold } => {
                data_model::infer_process_definition(d, *similarity_threshold)?
            }
            p @ ProcessSpec::Explicit { .. } => {
                let def = p.explicit().expect("explicit");
                def.validate(d.column_ids())?;
                def
            }
        };
        let imp = fit_impute(d, &self.cfg.imputer)?;
        self.report.process = Some(report::ProcessSummary {
            n_unit_processes: proc.unit_processes.len(),
            group_sizes: proc
                .group_indices(imp.dataset.column_ids())
                .iter()
                .map(Vec::len)
                .collect(),
            cycles: proc.cycles.clone(),
        });
        self.report.imputation = Some(report::ImputationSection {
            method: self.cfg.imputer.method,
            dropped: imp.dropped.clone(),
            knn_fallbacks: imp.knn_fallbacks,
        });
        self.state.process = Some(proc);
        self.state.labels = imp.dataset.labels().to_vec();
        self.state.imputed = Some(imp.dataset);
        Ok(())
    }

    fn extract(&mut self) -> Result<()> {
        let d = self.state.imputed.as_ref().expect("impute ran");
        let proc = self.state.process.as_ref().expect("impute ran");
        let imputer = self.cfg.imputer.method.to_string();
        let ex = extract_all(d, &self.cfg.extract, proc, &imputer)?;
        let groups: Vec<usize> = proc.group_indices(d.column_ids()).iter().map(Vec::len).collect();
        self.report.extraction = Some(report::ExtractionSection {
            n_input_columns: d.n_cols(),
            n_features: ex.features.n_cols(),
            expected_features: expected_feature_count(d.n_cols(), &self.cfg.extract, &groups),
            n_warnings: ex.warnings.len(),
        });
        if self.cfg.checkpoints {
            ex.features.write(&self.out, "features", Some(&self.state.labels))?;
            self.note(&["features.csv", "features_provenance.json"]);
        }
        self.state.features = Some(ex.features);
        Ok(())
    }

    fn select(&mut self) -> Result<()> {
        let fm = self.state.features.take().expect("features available");
        let x = DenseMatrix::from(&fm);
        let y = binary_labels(&self.state.labels);
        let names = fm.names();
        let seed = self.seed(Stage::Select);
        let cast_cfg = CastConfig {
            seed,
            ..self.cfg.select.cast.clone()
        };
        let sol = cast_search(&x, &y, &names, &cast_cfg)?;
        sol.write(&self.out)?;
        self.note(&["cast_solution.json", "cast_weights.csv"]);
        let (final_ids, rfe_metric) = match &self.cfg.select.rfe {
            Some(r) => {
                let rcfg = RfeConfig {
                    seed: crate::seed::derive(seed, 1),
                    ..*r
                };
                let trace = rfe(&x, &y, &sol.selected_features, &rcfg)?;
                trace.write(&self.out, &names)?;
                self.note(&["rfe.json", "rfe_curve.csv"]);
                (trace.best_subset.clone(), Some(trace.best_metric))
            }
            None => {
                let mut v = sol.selected_features.clone();
                v.sort_unstable();
                (v, None)
            }
        };
        let selected = fm.select_columns(&final_ids);
        self.report.selection = Some(report::SelectionSection {
            n_candidates: fm.n_cols(),
            rankers: sol.rankers.clone(),
            weights: sol.weights.clone(),
            fs: sol.fs,
            cast_metric: sol.best_metric,
            weights_converged: sol.convergence.converged,
            cast_features: sol.selected_names.clone(),
            rfe_best_metric: rfe_metric,
            final_features: selected.names(),
        });
        if self.cfg.checkpoints {
            selected.write(&self.out, "selected", Some(&self.state.labels))?;
            self.note(&["selected.csv", "selected_provenance.json"]);
        }
        self.state.features = Some(selected);
        Ok(())
    }

    fn anomaly(&mut self) -> Result<()> {
        let fm = self.state.features.take().expect("features available");
        let x = DenseMatrix::from(&fm);
        let ac = &self.cfg.anomaly;
        let portfolio = DetectorPortfolio {
            seed: self.seed(Stage::Anomaly),
            ..ac.portfolio.clone()
        };
        let tally = fit_predict_portfolio(&x, &portfolio)?;
        let af = abnormal_factor(&tally, &self.state.labels)?;
        let thresholds = match ac.adaptive_quantile {
            Some(q) => adaptive_thresholds(&af, &self.state.labels, q)?,
            None => ac.thresholds,
        };
        let rep = classify_levels(&af, &self.state.labels, &tally, &thresholds)?;
        rep.write(&self.out)?;
        self.note(&["anomaly.csv", "anomaly_summary.json"]);
        self.report.anomaly = Some(report::AnomalySection {
            summary: rep.summary(),
            excluded: ac.exclude,
            n_excluded_rows: if ac.exclude { rep.excluded_rows.len() } else { 0 },
        });
        if ac.exclude && !rep.excluded_rows.is_empty() {
            let keep: Vec<usize> = (0..fm.n_rows())
                .filter(|&r| rep.levels[r] != Level::Anomalous)
                .collect();
            self.state.labels = keep.iter().map(|&r| self.state.labels[r]).collect();
            self.state.features = Some(fm.select_rows(&keep));
        } else {
            self.state.features = Some(fm);
        }
        Ok(())
    }

    fn classify(&mut self) -> Result<()> {
        let fm = self.state.features.take().expect("features available");
        let x = DenseMatrix::from(&fm);
        let y = binary_labels(&self.state.labels);
        let names = fm.names();
        let plan = &self.cfg.classify;
        let seed = self.seed(Stage::Classify);
        let results = run_ablation(plan, &x, &y, seed)?;
        let w = winner(&results).expect("at least two arms");

        let mut jsonl = String::new();
        let mut bsf = String::from("arm,trial_id,iteration,best_metric\n");
        for r in &results {
            for t in &r.trace.trials {
                let mut v = serde_json::to_value(t)?;
                v.as_object_mut()
                    .expect("record is an object")
                    .insert("arm".into(), r.arm.name().into());
                jsonl.push_str(&serde_json::to_string(&v)?);
                jsonl.push('\n');
            }
            for b in r.trace.best_so_far() {
                bsf.push_str(&format!("{},{},{},{}\n", r.arm, b.trial_id, b.iteration, b.best_metric));
            }
        }
        self.write("study_trace.jsonl", jsonl)?;
        self.write("best_so_far.csv", bsf)?;
        let mut ab = String::from("arm,best_metric,delta,cv_std_error,oof_accuracy,oof_precision,oof_recall,oof_f1\n");
        for r in &results {
            ab.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.arm, r.best_metric, r.delta, r.cv_std_error, r.oof.accuracy, r.oof.precision, r.oof.recall, r.oof.f1
            ));
        }
        self.write("ablation.csv", ab)?;

        let ex = explain(
            plan,
            &results[w].best_learner,
            &x,
            &y,
            &names,
            crate::seed::derive(seed, 1),
        )?;
        self.write("importance.csv", importance_csv(&ex.importance))?;
        for pd in &ex.partial_dependence {
            let file = format!(
                "partial_dependence/{:04}_{}.csv",
                pd.feature,
                file_stem(&names[pd.feature])
            );
            self.write(&file, pd.to_csv())?;
        }
        self.write("model.json", serde_json::to_string(&ex.model)?)?;

        self.report.classification = Some(report::ClassificationSection {
            metric: plan.metric,
            n_rows: x.n_rows(),
            n_features: x.n_cols(),
            arms: results
                .iter()
                .map(|r| report::ArmSummary {
                    arm: r.arm,
                    best_metric: r.best_metric,
                    delta: r.delta,
                    cv_std_error: r.cv_std_error,
                    best_config: r.best_config.clone(),
                    oof: r.oof,
                    hp_importance: r.hp_importance.clone(),
                    n_trials: r.trace.trials.len(),
                    consumed_budget: r.trace.consumed_budget() / r.trace.max_budget,
                })
                .collect(),
            winner: results[w].arm,
        });
        self.state.features = Some(fm);
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.report)?;
        self.write("run_report.json", text)?;
        Manifest::build(&self.out, &self.files)?.write(&self.out)?;
        Ok(())
    }
}

/// Keeps file names portable: anything outside `[A-Za-z0-9._-]` becomes `_`.
fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    s.chars().take(80).collect()
}

/// Row indices marked `anomalous` in an `anomaly.csv`.
pub fn read_anomalous_rows(path: &Path) -> Result<std::collections::BTreeSet<usize>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Structure(format!("{}: {e}", path.display())))?;
    let mut out = std::collections::BTreeSet::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Structure(format!("{}: {e}", path.display())))?;
        if rec.get(5) == Some("anomalous") {
            let row = rec.get(0).unwrap_or("");
            out.insert(row.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: i,
                col: 0,
                token: row.to_string(),
            })?);
        }
    }
    Ok(out)
}

/// Runs the enabled stages, writing every artifact, `run_report.json` and
/// `manifest.json` under `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> std::result::Result<RunReport, RunFailure> {
    cfg.validate().map_err(|e| fail(FailureKind::Config, e))?;
    fs::create_dir_all(out).map_err(|e| fail(FailureKind::Stage, Error::io(out, e)))?;
    let mut stages = cfg.stages.clone();
    stages.sort();
    let mut r = Runner {
        cfg,
        out: out.to_path_buf(),
        report: RunReport::new(cfg.seed, stages.clone()),
        files: Vec::new(),
        state: State {
            dataset: None,
            process: None,
            imputed: None,
            features: None,
            labels: Vec::new(),
        },
    };
    let mut steps = stages.clone();
    if cfg.input.is_checkpoint() {
        // the checkpoint loader stands in for the raw-data stages
        steps.insert(0, Stage::Ingest);
    }
    for s in steps {
        let t0 = Instant::now();
        let res = match s {
            Stage::Ingest => r.ingest(),
            Stage::Profile => r.profile(),
            Stage::Impute => r.impute(),
            Stage::Extract => r.extract(),
            Stage::Select => r.select(),
            Stage::Anomaly => r.anomaly(),
            Stage::Classify => r.classify(),
        };
        r.report
            .timings
            .insert(s.name().to_string(), t0.elapsed().as_secs_f64());
        if let Err(e) = res {
            log::error!("stage {s} failed: {e}");
            let kind = if s == Stage::Ingest {
                FailureKind::Data
            } else {
                FailureKind::Stage
            };
            r.report.status = RunStatus::Failed;
            r.report.failure = Some(StageFailure {
                stage: s,
                message: e.to_string(),
            });
            let _ = r.finish();
            let error = if kind == FailureKind::Stage {
                Error::Stage {
                    stage: s.name().into(),
                    message: e.to_string(),
                }
            } else {
                e
            };
            return Err(RunFailure {
                kind,
                error,
                report: Some(r.report),
            });
        }
        log::info!("stage {s} done in {:.2}s", r.report.timings[s.name()]);
    }
    r.finish().map_err(|e| fail(FailureKind::Stage, e))?;
    Ok(r.report)
}
