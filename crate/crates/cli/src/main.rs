//! `xautoml` command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use xautoml::pipeline::{render_summary, run_pipeline, Manifest, PipelineConfig, RunReport, Stage};

#[derive(Parser)]
#[command(name = "xautoml", version, about = "Explainable AutoML for yield analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Root seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the stages listed in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Load and profile a dataset. With one path the file is read as CSV.
    Profile {
        data: PathBuf,
        labels: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Impute and extract features; writes the `features` checkpoint.
    Extract {
        #[arg(long)]
        data: PathBuf,
        /// SECOM labels file; omit for CSV input.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Config supplying the process, imputer and extract sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// CAST selection and RFE on a feature checkpoint; writes `selected`.
    Select {
        #[command(flatten)]
        input: Checkpoint,
        #[command(flatten)]
        common: Common,
    },
    /// Anomaly screening on a feature checkpoint.
    Detect {
        #[command(flatten)]
        input: Checkpoint,
        #[command(flatten)]
        common: Common,
    },
    /// Classifier ablation and explanations on a feature checkpoint.
    Classify {
        #[command(flatten)]
        input: Checkpoint,
        /// `anomaly.csv` whose anomalous rows are left out.
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Verify a report directory against its manifest and summarise it.
    Report {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Checkpoint {
    /// Directory holding `<stem>.csv` and `<stem>_provenance.json`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "features")]
    stem: String,
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn abs(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Reads an optional config as JSON and replaces its input and stages.
fn assemble(
    config: Option<&Path>,
    input: Value,
    stages: &[Stage],
    checkpoints: bool,
) -> Result<PipelineConfig, Failure> {
    let (mut v, base) = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_failure(format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| config_failure(format!("{}: {e}", p.display())))?;
            (v, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (json!({}), PathBuf::from(".")),
    };
    let obj = v
        .as_object_mut()
        .ok_or_else(|| config_failure("config must be a JSON object"))?;
    obj.insert("input".into(), input);
    obj.insert("stages".into(), serde_json::to_value(stages).expect("stages serialise"));
    obj.insert("checkpoints".into(), checkpoints.into());
    PipelineConfig::from_json(&v.to_string(), &base).map_err(|e| config_failure(e.to_string()))
}

fn execute(mut cfg: PipelineConfig, common: &Common, default_out: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common
        .out
        .clone()
        .or(default_out)
        .unwrap_or_else(|| PathBuf::from("xautoml_out"));
    match run_pipeline(&cfg, &out) {
        Ok(report) => {
            print!("{}", render_summary(&report));
            println!("artifacts: {}", out.display());
            Ok(())
        }
        Err(f) => {
            if let Some(r) = &f.report {
                print!("{}", render_summary(r));
            }
            Err(Failure {
                code: f.kind.exit_code() as u8,
                message: f.error.to_string(),
            })
        }
    }
}

fn checkpoint_input(c: &Checkpoint, exclude: Option<&Path>) -> Value {
    json!({
        "format": "features",
        "dir": abs(&c.features),
        "stem": c.stem,
        "exclude_from": exclude.map(abs),
    })
}

fn report(dir: &Path, common: &Common) -> Result<(), Failure> {
    let data_err = |m: String| Failure { code: 3, message: m };
    let manifest = Manifest::read(dir).map_err(|e| data_err(e.to_string()))?;
    let bad = manifest.verify(dir);
    let r = RunReport::read(&dir.join("run_report.json")).map_err(|e| data_err(e.to_string()))?;
    let mut text = render_summary(&r);
    text.push_str(&format!(
        "manifest: {} files, {} mismatched\n",
        manifest.files.len(),
        bad.len()
    ));
    for b in &bad {
        text.push_str(&format!("  mismatch: {b}\n"));
    }
    print!("{text}");
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out).map_err(|e| Failure {
            code: 4,
            message: format!("{}: {e}", out.display()),
        })?;
        let p = out.join("summary.txt");
        std::fs::write(&p, &text).map_err(|e| Failure {
            code: 4,
            message: format!("{}: {e}", p.display()),
        })?;
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(data_err(format!("{} artifact(s) do not match the manifest", bad.len())))
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    let common = match &cmd {
        Cmd::Run { common, .. }
        | Cmd::Profile { common, .. }
        | Cmd::Extract { common, .. }
        | Cmd::Select { common, .. }
        | Cmd::Detect { common, .. }
        | Cmd::Classify { common, .. }
        | Cmd::Report { common, .. } => common.clone(),
    };
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(config_failure("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| config_failure(e.to_string()))?;
    }
    match cmd {
        Cmd::Run { config, .. } => {
            let cfg = PipelineConfig::from_file(&config).map_err(|e| config_failure(e.to_string()))?;
            let default_out = Some(cfg.report_dir.clone());
            execute(cfg, &common, default_out)
        }
        Cmd::Profile { data, labels, .. } => {
            let input = match labels {
                Some(l) => json!({"format": "secom", "data": abs(&data), "labels": abs(&l)}),
                None => json!({"format": "csv", "path": abs(&data)}),
            };
            execute(
                assemble(None, input, &[Stage::Ingest, Stage::Profile], false)?,
                &common,
                None,
            )
        }
        Cmd::Extract {
            data, labels, config, ..
        } => {
            let input = match labels {
                Some(l) => json!({"format": "secom", "data": abs(&data), "labels": abs(&l)}),
                None => json!({"format": "csv", "path": abs(&data)}),
            };
            let stages = [Stage::Ingest, Stage::Profile, Stage::Impute, Stage::Extract];
            execute(assemble(config.as_deref(), input, &stages, true)?, &common, None)
        }
        Cmd::Select { input, .. } => {
            let cfg = assemble(
                input.config.as_deref(),
                checkpoint_input(&input, None),
                &[Stage::Select],
                true,
            )?;
            execute(cfg, &common, None)
        }
        Cmd::Detect { input, .. } => {
            let cfg = assemble(
                input.config.as_deref(),
                checkpoint_input(&input, None),
                &[Stage::Anomaly],
                false,
            )?;
            execute(cfg, &common, None)
        }
        Cmd::Classify { input, exclude, .. } => {
            let cfg = assemble(
                input.config.as_deref(),
                checkpoint_input(&input, exclude.as_deref()),
                &[Stage::Classify],
                false,
            )?;
            execute(cfg, &common, None)
        }
        Cmd::Report { dir, .. } => report(&dir, &common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
