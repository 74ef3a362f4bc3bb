//! Column-major `f64` matrix consumed by the model fitting code.

use crate::error::{Error, Result};
use crate::feature_factory::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    cols: Vec<Vec<f64>>,
}

impl DenseMatrix {
    pub fn from_columns(n_rows: usize, cols: Vec<Vec<f64>>) -> Result<Self> {
        if let Some((j, c)) = cols.iter().enumerate().find(|(_, c)| c.len() != n_rows) {
            return Err(Error::invalid(format!(
                "column {j} has {} rows, expected {n_rows}",
                c.len()
            )));
        }
        Ok(DenseMatrix { n_rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::WidthMismatch {
                expected: width,
                got: r.len(),
            });
        }
        let cols = (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Ok(DenseMatrix {
            n_rows: rows.len(),
            cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.cols[c][r]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[r]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        DenseMatrix {
            n_rows: rows.len(),
            cols: self.cols.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        DenseMatrix {
            n_rows: self.n_rows,
            cols: cols.iter().map(|&j| self.cols[j].clone()).collect(),
        }
    }

    /// Copy with column `j` replaced.
    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Self {
        let mut m = self.clone();
        m.cols[j] = values;
        m
    }

    pub fn set_column(&mut self, j: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows);
        self.cols[j] = values;
    }
}

impl<T: Scalar> From<&FeatureMatrix<T>> for DenseMatrix {
    fn from(fm: &FeatureMatrix<T>) -> Self {
        DenseMatrix {
            n_rows: fm.n_rows(),
            cols: fm
                .columns()
                .iter()
                .map(|c| c.iter().map(|v| v.as_f64()).collect())
                .collect(),
        }
    }
}

/// Learner labels: failure (`+1`) is 1, everything else 0.
pub fn binary_labels(labels: &[i8]) -> Vec<u8> {
    labels.iter().map(|&l| u8::from(l == 1)).collect()
}
