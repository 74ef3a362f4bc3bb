//! Raw manufacturing datasets: loading, validation, profiling and
//! process-structure inference from missing-value patterns.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Sample label for a normal (passing) product.
pub const NORMAL: i8 = -1;
/// Sample label for a failure.
pub const FAILURE: i8 = 1;

/// Row-major signal matrix with a missing mask and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n_rows: usize,
    n_cols: usize,
    values: Vec<T>,
    missing: Vec<bool>,
    labels: Vec<i8>,
    column_ids: Vec<String>,
    timestamps: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from row-major storage, checking every invariant.
    ///
    /// Missing cells hold `NaN` in `values`; non-missing cells must be finite.
    pub fn new(
        n_cols: usize,
        values: Vec<T>,
        missing: Vec<bool>,
        labels: Vec<i8>,
        column_ids: Vec<String>,
        timestamps: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_cols == 0 || values.is_empty() {
            return Err(Error::Structure("dataset has no cells".into()));
        }
        if values.len() % n_cols != 0 {
            return Err(Error::Structure(format!(
                "{} values do not fill rows of width {n_cols}",
                values.len()
            )));
        }
        let n_rows = values.len() / n_cols;
        if missing.len() != values.len() {
            return Err(Error::Structure("missing mask shape differs from values".into()));
        }
        if labels.len() != n_rows {
            return Err(Error::Structure(format!("{} labels for {n_rows} rows", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != NORMAL && l != FAILURE) {
            return Err(Error::Structure(format!("label {bad} is not -1 or 1")));
        }
        if column_ids.len() != n_cols {
            return Err(Error::Structure(format!(
                "{} column ids for {n_cols} columns",
                column_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n_cols);
        for id in &column_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Structure(format!("duplicate column id {id:?}")));
            }
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n_rows {
                return Err(Error::Structure("timestamp count differs from row count".into()));
            }
        }
        for (i, (&v, &m)) in values.iter().zip(&missing).enumerate() {
            if !m && !v.is_finite() {
                return Err(Error::Structure(format!(
                    "non-finite observed value at row {}, column {}",
                    i / n_cols,
                    i % n_cols
                )));
            }
        }
        let values = values
            .into_iter()
            .zip(&missing)
            .map(|(v, &m)| if m { T::nan() } else { v })
            .collect();
        Ok(Dataset {
            n_rows,
            n_cols,
            values,
            missing,
            labels,
            column_ids,
            timestamps,
        })
    }

    /// Builds a complete (no missing cells) dataset from columns.
    pub fn from_columns(columns: &[Vec<T>], labels: Vec<i8>, column_ids: Vec<String>) -> Result<Self> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Structure("columns have different lengths".into()));
        }
        let mut values = Vec::with_capacity(n_rows * n_cols);
        let mut missing = Vec::with_capacity(n_rows * n_cols);
        for r in 0..n_rows {
            for c in columns {
                values.push(c[r]);
                missing.push(!c[r].is_finite());
            }
        }
        Self::new(n_cols, values, missing, labels, column_ids, None)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn column_ids(&self) -> &[String] {
        &self.column_ids
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    /// Cell value; `None` when missing.
    pub fn get(&self, row: usize, col: usize) -> Option<T> {
        let i = row * self.n_cols + col;
        (!self.missing[i]).then(|| self.values[i])
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn row_mask(&self, row: usize) -> &[bool] {
        &self.missing[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Full column with `NaN` in missing cells.
    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.n_rows).map(|r| self.values[r * self.n_cols + col]).collect()
    }

    /// Observed (non-missing) values of a column, in row order.
    pub fn observed(&self, col: usize) -> Vec<T> {
        (0..self.n_rows).filter_map(|r| self.get(r, col)).collect()
    }

    pub fn column_missing(&self, col: usize) -> Vec<bool> {
        (0..self.n_rows).map(|r| self.is_missing(r, col)).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    pub fn columns(&self) -> Vec<Vec<T>> {
        (0..self.n_cols).map(|c| self.column(c)).collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut missing = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
            missing.extend_from_slice(self.row_mask(r));
        }
        Dataset {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            values,
            missing,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            column_ids: self.column_ids.clone(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|ts| rows.iter().map(|&r| ts[r].clone()).collect()),
        }
    }

    /// New dataset holding the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        let mut missing = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            for &c in cols {
                let i = r * self.n_cols + c;
                values.push(self.values[i]);
                missing.push(self.missing[i]);
            }
        }
        Dataset {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            values,
            missing,
            labels: self.labels.clone(),
            column_ids: cols.iter().map(|&c| self.column_ids[c].clone()).collect(),
            timestamps: self.timestamps.clone(),
        }
    }

    /// Replaces cell contents; used by imputers. Clears the missing flag.
    pub(crate) fn fill(&mut self, row: usize, col: usize, value: T) {
        let i = row * self.n_cols + col;
        self.values[i] = value;
        self.missing[i] = false;
    }
}

/// Summary statistics of a raw dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProfile {
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_missing_cells: usize,
    pub n_constant_cols: usize,
    pub n_low_variance_cols: usize,
    pub n_failures: usize,
    /// Majority count over minority count; the minority count is floored at 1.
    pub imbalance_ratio: f64,
    pub variance_threshold: f64,
}

/// Column groups (unit processes) and the cycle count of each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessDefinition {
    pub unit_processes: Vec<Vec<String>>,
    pub cycles: Vec<usize>,
}

impl ProcessDefinition {
    /// Every column in one group with a single cycle.
    pub fn single_group(column_ids: &[String]) -> Self {
        ProcessDefinition {
            unit_processes: vec![column_ids.to_vec()],
            cycles: vec![1],
        }
    }

    /// Each group as column indices into `column_ids`; unknown ids are skipped.
    pub fn group_indices(&self, column_ids: &[String]) -> Vec<Vec<usize>> {
        let index: BTreeMap<&str, usize> = column_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        self.unit_processes
            .iter()
            .map(|g| g.iter().filter_map(|id| index.get(id.as_str()).copied()).collect())
            .collect()
    }

    /// Checks disjointness and that every member names a known column.
    pub fn validate(&self, column_ids: &[String]) -> Result<()> {
        if self.cycles.len() != self.unit_processes.len() {
            return Err(Error::Structure("cycle count per unit process is missing".into()));
        }
        let known: HashSet<&str> = column_ids.iter().map(String::as_str).collect();
        let mut seen = HashSet::new();
        for id in self.unit_processes.iter().flatten() {
            if !known.contains(id.as_str()) {
                return Err(Error::Structure(format!("unknown column {id:?} in process definition")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Structure(format!("column {id:?} appears in two unit processes")));
            }
        }
        Ok(())
    }
}

/// Train/test row indices of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Reads the SECOM pair of files.
///
/// The data file holds whitespace-separated numbers per row with the literal
/// token `NaN` for a missing reading. The labels file holds
/// `<label> "<timestamp>"` per row.
pub fn load_secom<T: Scalar>(data_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let text = fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
    let mut values = Vec::new();
    let mut missing = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut width = 0;
        for (col, token) in line.split_whitespace().enumerate() {
            width += 1;
            if token == "NaN" {
                values.push(T::nan());
                missing.push(true);
                continue;
            }
            match token.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.push(T::of(v));
                    missing.push(false);
                }
                _ => {
                    return Err(Error::Parse {
                        path: data_path.to_path_buf(),
                        row,
                        col,
                        token: token.to_string(),
                    })
                }
            }
        }
        match n_cols {
            None => n_cols = Some(width),
            Some(w) if w != width => {
                return Err(Error::Structure(format!(
                    "{}: row {row} has {width} fields, expected {w}",
                    data_path.display()
                )))
            }
            _ => {}
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::Structure(format!("{}: no data rows", data_path.display())))?;

    let text = fs::read_to_string(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let mut labels = Vec::with_capacity(n_rows);
    let mut timestamps = Vec::with_capacity(n_rows);
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (label, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let label = match label.parse::<i8>() {
            Ok(l @ (NORMAL | FAILURE)) => l,
            _ => {
                return Err(Error::Parse {
                    path: labels_path.to_path_buf(),
                    row,
                    col: 0,
                    token: label.to_string(),
                })
            }
        };
        labels.push(label);
        timestamps.push(rest.trim().trim_matches('"').to_string());
    }
    if labels.len() != n_rows {
        return Err(Error::Structure(format!(
            "{} data rows but {} label rows",
            n_rows,
            labels.len()
        )));
    }
    let column_ids = (0..n_cols).map(|j| format!("x{j:03}")).collect();
    Dataset::new(n_cols, values, missing, labels, column_ids, Some(timestamps))
}

/// Reads a comma-separated file with a header row.
///
/// A `label` column (values -1/1) is required; an optional `timestamp`
/// column is kept as text. Every other column is a signal; an empty field
/// marks a missing reading.
pub fn load_csv<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Structure(format!("{}: no `label` column", path.display())))?;
    let ts_idx = headers.iter().position(|h| h == "timestamp");
    let signal_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && Some(i) != ts_idx)
        .collect();
    let column_ids: Vec<String> = signal_idx.iter().map(|&i| headers[i].to_string()).collect();

    let mut values = Vec::new();
    let mut missing = Vec::new();
    let mut labels = Vec::new();
    let mut timestamps = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let label_tok = record.get(label_idx).unwrap_or("").trim();
        match label_tok.parse::<i8>() {
            Ok(l @ (NORMAL | FAILURE)) => labels.push(l),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    col: label_idx,
                    token: label_tok.to_string(),
                })
            }
        }
        if let Some(t) = ts_idx {
            timestamps.push(record.get(t).unwrap_or("").to_string());
        }
        for &c in &signal_idx {
            let tok = record.get(c).unwrap_or("").trim();
            if tok.is_empty() {
                values.push(T::nan());
                missing.push(true);
            } else {
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        values.push(T::of(v));
                        missing.push(false);
                    }
                    _ => {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            row,
                            col: c,
                            token: tok.to_string(),
                        })
                    }
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Structure(format!("{}: no data rows", path.display())));
    }
    let timestamps = ts_idx.map(|_| timestamps);
    Dataset::new(column_ids.len(), values, missing, labels, column_ids, timestamps)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Structure(format!("{}: {e}", path.display()))
}

/// Writes a dataset in the generic CSV format read by [`load_csv`].
pub fn write_csv<T: Scalar>(d: &Dataset<T>, path: &Path) -> Result<()> {
    let mut out = String::new();
    let mut header: Vec<&str> = d.column_ids.iter().map(String::as_str).collect();
    header.push("label");
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..d.n_rows {
        let mut fields: Vec<String> = (0..d.n_cols)
            .map(|c| d.get(r, c).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        fields.push(d.labels[r].to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Counts missing cells, constant and low-variance columns and class balance.
///
/// Statistics use observed values only. Variance is the sample variance
/// (denominator n - 1); a column with fewer than two observations has
/// variance 0. An all-missing column counts as constant.
pub fn profile<T: Scalar>(d: &Dataset<T>, variance_threshold: f64) -> DataProfile {
    let mut n_constant = 0;
    let mut n_low_var = 0;
    for c in 0..d.n_cols {
        let obs = d.observed(c);
        let constant = obs.windows(2).all(|w| w[0] == w[1]);
        if constant {
            n_constant += 1;
            n_low_var += 1;
            continue;
        }
        let n = obs.len() as f64;
        let mean = obs.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = obs.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var < variance_threshold {
            n_low_var += 1;
        }
    }
    let n_failures = d.labels.iter().filter(|&&l| l == FAILURE).count();
    let n_normal = d.n_rows - n_failures;
    let (major, minor) = if n_failures > n_normal {
        (n_failures, n_normal)
    } else {
        (n_normal, n_failures)
    };
    DataProfile {
        n_rows: d.n_rows,
        n_cols: d.n_cols,
        n_missing_cells: d.n_missing(),
        n_constant_cols: n_constant,
        n_low_variance_cols: n_low_var,
        n_failures,
        imbalance_ratio: major as f64 / minor.max(1) as f64,
        variance_threshold,
    }
}

/// Groups columns into unit processes by the similarity of their missing
/// masks.
///
/// Two columns are linked when the Jaccard similarity of their missing-row
/// sets is at least `similarity_threshold` (two empty sets count as
/// identical); groups are the connected components of that graph. A group's
/// cycle count is the largest number of its columns that share one exact
/// mask. A dataset without missing cells yields one group with one cycle.
pub fn infer_process_definition<T: Scalar>(d: &Dataset<T>, similarity_threshold: f64) -> Result<ProcessDefinition> {
    if !(similarity_threshold > 0.0 && similarity_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "similarity threshold {similarity_threshold} outside (0, 1]"
        )));
    }
    if d.is_complete() {
        return Ok(ProcessDefinition::single_group(&d.column_ids));
    }
    let words = d.n_rows.div_ceil(64);
    let masks: Vec<Vec<u64>> = (0..d.n_cols)
        .map(|c| {
            let mut bits = vec![0u64; words];
            for r in 0..d.n_rows {
                if d.is_missing(r, c) {
                    bits[r / 64] |= 1 << (r % 64);
                }
            }
            bits
        })
        .collect();
    let counts: Vec<u32> = masks.iter().map(|m| m.iter().map(|w| w.count_ones()).sum()).collect();

    let mut parent: Vec<usize> = (0..d.n_cols).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..d.n_cols {
        for b in a + 1..d.n_cols {
            let inter: u32 = masks[a].iter().zip(&masks[b]).map(|(x, y)| (x & y).count_ones()).sum();
            let union = counts[a] + counts[b] - inter;
            let sim = if union == 0 {
                1.0
            } else {
                f64::from(inter) / f64::from(union)
            };
            if sim >= similarity_threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..d.n_cols {
        let root = find(&mut parent, c);
        groups.entry(root).or_default().push(c);
    }
    let mut unit_processes = Vec::with_capacity(groups.len());
    let mut cycles = Vec::with_capacity(groups.len());
    for members in groups.values() {
        let mut signature_counts: BTreeMap<&[u64], usize> = BTreeMap::new();
        for &c in members {
            *signature_counts.entry(masks[c].as_slice()).or_default() += 1;
        }
        cycles.push(signature_counts.values().copied().max().unwrap_or(1));
        unit_processes.push(members.iter().map(|&c| d.column_ids[c].clone()).collect());
    }
    Ok(ProcessDefinition { unit_processes, cycles })
}

/// Stratified k-fold split over a label sequence.
///
/// Each class is shuffled with the seed and dealt round-robin over the
/// folds; the dealing position carries over between classes so fold sizes
/// stay within one row of each other.
pub fn stratified_folds(labels: &[i8], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count {k} is below 2")));
    }
    let mut classes: BTreeMap<i8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    for (&class, rows) in &classes {
        if rows.len() < k {
            return Err(Error::InsufficientClass {
                class,
                count: rows.len(),
                k,
            });
        }
    }
    let mut test_sets = vec![Vec::new(); k];
    let mut next = 0;
    for (ci, rows) in classes.values().enumerate() {
        let mut rows = rows.clone();
        rows.shuffle(&mut seed::rng_for(seed, ci as u64));
        for r in rows {
            test_sets[next].push(r);
            next = (next + 1) % k;
        }
    }
    let n = labels.len();
    Ok(test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &r in &test {
                in_test[r] = true;
            }
            let train = (0..n).filter(|&r| !in_test[r]).collect();
            Fold { train, test }
        })
        .collect())
}

/// [`stratified_folds`] over a dataset's labels.
pub fn stratified_split<T: Scalar>(d: &Dataset<T>, k: usize, seed: u64) -> Result<Vec<Fold>> {
    stratified_folds(&d.labels, k, seed)
}
