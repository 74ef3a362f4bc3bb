//! Knowledge-informed feature extraction.
//!
//! Every derived feature is a per-sample column. For sample `i` and raw
//! column `x`, the *context* is the trailing window
//! `x[i + 1 - W ..= i]` (clipped at the first row), `W` being
//! [`ExtractConfig::context_window`]. A feature is then one of:
//!
//! * the raw series itself (`include_raw`),
//! * an operation over the context (`raw_summaries`),
//! * an operation over a series function applied to the context,
//! * a scalar function of the context (`qcd`, one `llt` value per s),
//! * the Pearson correlation of the contexts of two adjacent columns in
//!   the same unit process (`corp`),
//! * an operation over the sample's principal-component scores within a
//!   unit process (`pca`).
//!
//! The resulting width is given in closed form by [`expected_feature_count`].

pub mod functions;
pub mod operations;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use functions::{apply_function, FunctionId, FunctionOutput, FunctionParams};
pub use operations::{apply_operation, OperationId};

use crate::data_model::{Dataset, ProcessDefinition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where a feature column came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    /// Imputer that completed the source data (`none` when it was complete).
    pub imputer: String,
    /// `None` for the raw column.
    pub function: Option<FunctionId>,
    /// Function parameter distinguishing multi-output functions, e.g. `s=0.5`.
    pub param: Option<String>,
    /// `None` for the raw series and for scalar-valued functions.
    pub operation: Option<OperationId>,
    /// Rows whose value was undefined or non-finite and replaced by 0.
    #[serde(default)]
    pub sentinels: usize,
}

impl Provenance {
    /// Stable identifier used as the CSV header.
    pub fn canonical(&self) -> String {
        let func = match (self.function, &self.param) {
            (None, _) => "raw".to_string(),
            (Some(f), None) => f.name().to_string(),
            (Some(f), Some(p)) => format!("{}[{p}]", f.name()),
        };
        let op = match self.operation {
            Some(op) => op.name(),
            None if self.function.is_none() => "series",
            None => "value",
        };
        format!("{}/{}/{func}/{op}", self.imputer, self.sources.join("+"))
    }

    fn key(
        &self,
    ) -> (
        Vec<String>,
        String,
        Option<FunctionId>,
        Option<String>,
        Option<OperationId>,
    ) {
        (
            self.sources.clone(),
            self.imputer.clone(),
            self.function,
            self.param.clone(),
            self.operation,
        )
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Derived feature columns with per-column provenance. All values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    n_rows: usize,
    columns: Vec<Vec<T>>,
    provenance: Vec<Provenance>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(n_rows: usize, columns: Vec<Vec<T>>, provenance: Vec<Provenance>) -> Result<Self> {
        if columns.len() != provenance.len() {
            return Err(Error::Structure(format!(
                "{} columns but {} provenance records",
                columns.len(),
                provenance.len()
            )));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != n_rows) {
            return Err(Error::Structure(format!("column {c} has the wrong length")));
        }
        if let Some(c) = columns.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Structure(format!(
                "column {} holds non-finite values",
                provenance[c]
            )));
        }
        let mut seen = HashSet::with_capacity(provenance.len());
        for p in &provenance {
            if !seen.insert(p.key()) {
                return Err(Error::Structure(format!("duplicate provenance {p}")));
            }
        }
        Ok(FeatureMatrix {
            n_rows,
            columns,
            provenance,
        })
    }

    /// Raw columns of a complete dataset, one `raw/series` feature each.
    pub fn from_dataset(d: &Dataset<T>, imputer: &str) -> Result<Self> {
        if !d.is_complete() {
            return Err(Error::invalid("dataset still has missing cells"));
        }
        let provenance = d
            .column_ids()
            .iter()
            .map(|id| Provenance {
                sources: vec![id.clone()],
                imputer: imputer.to_string(),
                function: None,
                param: None,
                operation: None,
                sentinels: 0,
            })
            .collect();
        Self::new(d.n_rows(), d.columns(), provenance)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn names(&self) -> Vec<String> {
        self.provenance.iter().map(Provenance::canonical).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        FeatureMatrix {
            n_rows: self.n_rows,
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            provenance: cols.iter().map(|&c| self.provenance[c].clone()).collect(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        FeatureMatrix {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Side-by-side union, e.g. of matrices built from different imputers.
    pub fn concat(parts: Vec<Self>) -> Result<Self> {
        let n_rows = parts.first().map_or(0, |p| p.n_rows);
        let mut columns = Vec::new();
        let mut provenance = Vec::new();
        for p in parts {
            if p.n_rows != n_rows {
                return Err(Error::Structure("feature matrices differ in row count".into()));
            }
            columns.extend(p.columns);
            provenance.extend(p.provenance);
        }
        Self::new(n_rows, columns, provenance)
    }

    /// Writes `<stem>.csv` (header = canonical provenance, optional leading
    /// `label` column) and `<stem>_provenance.json`.
    pub fn write(&self, dir: &Path, stem: &str, labels: Option<&[i8]>) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
        let mut header: Vec<String> = Vec::with_capacity(self.n_cols() + 1);
        if labels.is_some() {
            header.push("label".into());
        }
        header.extend(self.names());
        w.write_record(&header).map_err(|e| csv_err(&csv_path, e))?;
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.n_rows {
            record.clear();
            if let Some(l) = labels {
                record.push(l[r].to_string());
            }
            record.extend(self.columns.iter().map(|c| format!("{}", c[r])));
            w.write_record(&record).map_err(|e| csv_err(&csv_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join(format!("{stem}_provenance.json"));
        let json = serde_json::to_string_pretty(&self.provenance)?;
        fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
    }

    /// Reads what [`FeatureMatrix::write`] produced.
    pub fn read(dir: &Path, stem: &str) -> Result<(Self, Option<Vec<i8>>)> {
        let json_path = dir.join(format!("{stem}_provenance.json"));
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let provenance: Vec<Provenance> = serde_json::from_str(&text)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut rd = csv::Reader::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
        let header = rd.headers().map_err(|e| csv_err(&csv_path, e))?.clone();
        let has_label = header.get(0) == Some("label");
        let offset = usize::from(has_label);
        if header.len() - offset != provenance.len() {
            return Err(Error::Structure(format!(
                "{}: {} columns but {} provenance records",
                csv_path.display(),
                header.len() - offset,
                provenance.len()
            )));
        }
        let mut columns = vec![Vec::new(); provenance.len()];
        let mut labels = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(&csv_path, e))?;
            for (col, tok) in rec.iter().enumerate() {
                let parse_err = || Error::Parse {
                    path: csv_path.clone(),
                    row,
                    col,
                    token: tok.to_string(),
                };
                if has_label && col == 0 {
                    labels.push(tok.parse::<i8>().map_err(|_| parse_err())?);
                } else {
                    let v: f64 = tok.parse().map_err(|_| parse_err())?;
                    columns[col - offset].push(T::of(v));
                }
            }
        }
        let n_rows = columns.first().map_or(labels.len(), Vec::len);
        let fm = Self::new(n_rows, columns, provenance)?;
        Ok((fm, has_label.then_some(labels)))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Structure(format!("{}: {e}", path.display()))
}

/// Which functions and operations [`extract_all`] applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub functions: Vec<FunctionId>,
    pub operations: Vec<OperationId>,
    pub params: FunctionParams,
    pub context_window: usize,
    pub include_raw: bool,
    pub raw_summaries: bool,
    /// Correlate every column pair instead of adjacent columns per unit process.
    pub corp_full_matrix: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            functions: vec![
                FunctionId::Win5Mean,
                FunctionId::Win5Std,
                FunctionId::Pct,
                FunctionId::Diff,
                FunctionId::Cdf,
                FunctionId::Logr,
                FunctionId::Fft,
                FunctionId::Qcd,
                FunctionId::Llt,
                FunctionId::Corp,
            ],
            operations: vec![
                OperationId::Mean,
                OperationId::Std,
                OperationId::Min,
                OperationId::Max,
                OperationId::Q2,
                OperationId::Skew,
            ],
            params: FunctionParams::default(),
            context_window: 10,
            include_raw: true,
            raw_summaries: true,
            corp_full_matrix: false,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.context_window == 0 {
            return Err(Error::invalid("context_window must be at least 1"));
        }
        Ok(())
    }

    fn enabled_functions(&self) -> Vec<FunctionId> {
        let mut f = self.functions.clone();
        f.sort();
        f.dedup();
        f
    }

    fn enabled_operations(&self) -> Vec<OperationId> {
        let mut o = self.operations.clone();
        o.sort();
        o.dedup();
        o
    }
}

/// Closed-form width of [`extract_all`]'s output.
///
/// With `F` the enabled series functions, `O` the enabled operations and
/// `S` the llt s-values, each raw column contributes
/// `[raw] + [raw_summaries]·|O| + |F|·|O| + [qcd] + [llt]·|S|` features;
/// `corp` adds one feature per adjacent pair inside each unit process (or
/// per unordered pair in full-matrix mode) and `pca` adds `|O|` features
/// per unit process.
pub fn expected_feature_count(n_cols: usize, cfg: &ExtractConfig, group_sizes: &[usize]) -> usize {
    let funcs = cfg.enabled_functions();
    let n_ops = cfg.enabled_operations().len();
    let n_series = funcs.iter().filter(|f| f.is_series()).count();
    let has = |f: FunctionId| funcs.contains(&f);
    let per_col = usize::from(cfg.include_raw)
        + usize::from(cfg.raw_summaries) * n_ops
        + n_series * n_ops
        + usize::from(has(FunctionId::Qcd))
        + usize::from(has(FunctionId::Llt)) * cfg.params.llt_s_values.len();
    let corp = if !has(FunctionId::Corp) {
        0
    } else if cfg.corp_full_matrix {
        n_cols * n_cols.saturating_sub(1) / 2
    } else {
        group_sizes.iter().map(|g| g.saturating_sub(1)).sum()
    };
    let pca = if has(FunctionId::Pca) {
        group_sizes.iter().filter(|&&g| g > 0).count() * n_ops
    } else {
        0
    };
    n_cols * per_col + corp + pca
}

/// Non-fatal extraction issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractWarning {
    pub feature: String,
    pub sentinel_rows: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction<T> {
    pub features: FeatureMatrix<T>,
    pub warnings: Vec<ExtractWarning>,
}

struct Builder<'a, T> {
    n_rows: usize,
    imputer: &'a str,
    columns: Vec<Vec<T>>,
    provenance: Vec<Provenance>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    fn new(n_rows: usize, imputer: &'a str) -> Self {
        Builder {
            n_rows,
            imputer,
            columns: Vec::new(),
            provenance: Vec::new(),
        }
    }

    /// Adds a column; `None` entries become sentinel zeros.
    fn push(
        &mut self,
        sources: Vec<String>,
        function: Option<FunctionId>,
        param: Option<String>,
        operation: Option<OperationId>,
        values: Vec<Option<T>>,
    ) {
        debug_assert_eq!(values.len(), self.n_rows);
        let mut sentinels = 0;
        let col = values
            .into_iter()
            .map(|v| match v {
                Some(v) if v.is_finite() => v,
                _ => {
                    sentinels += 1;
                    T::zero()
                }
            })
            .collect();
        self.columns.push(col);
        self.provenance.push(Provenance {
            sources,
            imputer: self.imputer.to_string(),
            function,
            param,
            operation,
            sentinels,
        });
    }
}

fn context<T>(col: &[T], i: usize, w: usize) -> &[T] {
    &col[(i + 1).saturating_sub(w)..=i]
}

/// Features derived from a single raw column.
fn column_features<T: Scalar>(
    id: &str,
    col: &[T],
    cfg: &ExtractConfig,
    funcs: &[FunctionId],
    ops: &[OperationId],
    imputer: &str,
) -> (Vec<Vec<T>>, Vec<Provenance>) {
    let n = col.len();
    let w = cfg.context_window;
    let mut b = Builder::new(n, imputer);
    let src = || vec![id.to_string()];

    if cfg.include_raw {
        b.push(src(), None, None, None, col.iter().map(|&v| Some(v)).collect());
    }
    if cfg.raw_summaries {
        for &op in ops {
            let vals = (0..n).map(|i| apply_operation(context(col, i, w), op)).collect();
            b.push(src(), None, None, Some(op), vals);
        }
    }
    for &f in funcs.iter().filter(|f| f.is_series()) {
        let mut per_op: Vec<Vec<Option<T>>> = vec![Vec::with_capacity(n); ops.len()];
        for i in 0..n {
            let ctx = context(col, i, w);
            let derived = if f.is_sequential() && ctx.len() < 2 {
                None
            } else {
                apply_function(ctx, None, f, &cfg.params).ok()
            };
            for (k, &op) in ops.iter().enumerate() {
                per_op[k].push(derived.as_ref().and_then(|d| apply_operation(d.series(), op)));
            }
        }
        for (k, vals) in per_op.into_iter().enumerate() {
            b.push(src(), Some(f), None, Some(ops[k]), vals);
        }
    }
    if funcs.contains(&FunctionId::Qcd) {
        let vals = (0..n)
            .map(|i| {
                let q = functions::qcd(context(col, i, w));
                q.is_finite().then_some(q)
            })
            .collect();
        b.push(src(), Some(FunctionId::Qcd), None, None, vals);
    }
    if funcs.contains(&FunctionId::Llt) {
        for &s in &cfg.params.llt_s_values {
            let vals = (0..n)
                .map(|i| Some(functions::laplace(context(col, i, w), s, cfg.params.llt_dt)))
                .collect();
            b.push(src(), Some(FunctionId::Llt), Some(format!("s={s}")), None, vals);
        }
    }
    (b.columns, b.provenance)
}

/// Expands a complete dataset into the derived feature matrix.
///
/// Output order is deterministic: per raw column (dataset order) the raw
/// series, raw summaries, series functions × operations, `qcd`, `llt`;
/// then `corp` pairs; then `pca` summaries per unit process.
pub fn extract_all<T: Scalar>(
    d: &Dataset<T>,
    cfg: &ExtractConfig,
    proc: &ProcessDefinition,
    imputer: &str,
) -> Result<Extraction<T>> {
    cfg.validate()?;
    if !d.is_complete() {
        return Err(Error::invalid("extract_all needs a dataset without missing cells"));
    }
    let funcs = cfg.enabled_functions();
    let ops = cfg.enabled_operations();
    let cols = d.columns();
    let ids = d.column_ids();
    let n = d.n_rows();
    let w = cfg.context_window;

    let per_column: Vec<(Vec<Vec<T>>, Vec<Provenance>)> = cols
        .par_iter()
        .zip(ids.par_iter())
        .map(|(col, id)| column_features(id, col, cfg, &funcs, &ops, imputer))
        .collect();
    let mut b = Builder::new(n, imputer);
    for (c, p) in per_column {
        b.columns.extend(c);
        b.provenance.extend(p);
    }

    let groups: Vec<Vec<usize>> = proc.group_indices(ids);
    if funcs.contains(&FunctionId::Corp) {
        let pairs: Vec<(usize, usize)> = if cfg.corp_full_matrix {
            (0..cols.len())
                .flat_map(|a| (a + 1..cols.len()).map(move |b| (a, b)))
                .collect()
        } else {
            groups.iter().flat_map(|g| g.windows(2).map(|p| (p[0], p[1]))).collect()
        };
        let corr: Vec<Vec<Option<T>>> = pairs
            .par_iter()
            .map(|&(a, c)| {
                (0..n)
                    .map(|i| Some(functions::pearson(context(&cols[a], i, w), context(&cols[c], i, w))))
                    .collect()
            })
            .collect();
        for (&(a, c), vals) in pairs.iter().zip(corr) {
            b.push(
                vec![ids[a].clone(), ids[c].clone()],
                Some(FunctionId::Corp),
                None,
                None,
                vals,
            );
        }
    }
    if funcs.contains(&FunctionId::Pca) {
        for g in groups.iter().filter(|g| !g.is_empty()) {
            let members: Vec<Vec<T>> = g.iter().map(|&c| cols[c].clone()).collect();
            let scores = functions::pca_project(&members, cfg.params.pca_threshold);
            let sources: Vec<String> = g.iter().map(|&c| ids[c].clone()).collect();
            for &op in &ops {
                let vals = (0..n)
                    .map(|i| {
                        let row: Vec<T> = scores.iter().map(|s| s[i]).collect();
                        apply_operation(&row, op)
                    })
                    .collect();
                b.push(sources.clone(), Some(FunctionId::Pca), None, Some(op), vals);
            }
        }
    }

    let warnings = b
        .provenance
        .iter()
        .filter(|p| p.sentinels > 0)
        .map(|p| ExtractWarning {
            feature: p.canonical(),
            sentinel_rows: p.sentinels,
        })
        .collect();
    let features = FeatureMatrix::new(n, b.columns, b.provenance)?;
    Ok(Extraction { features, warnings })
}
