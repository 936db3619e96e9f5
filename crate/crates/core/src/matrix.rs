//! Column-named numeric matrix passed between the preprocessing, split and
//! model stages.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixError {
    UnknownColumn(String),
    RaggedRow {
        row: usize,
        len: usize,
        expected: usize,
    },
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixError::UnknownColumn(name) => write!(f, "unknown column `{name}`"),
            MatrixError::RaggedRow { row, len, expected } => {
                write!(f, "row {row} has {len} cells, expected {expected}")
            }
            MatrixError::ColumnMismatch { expected, got } => {
                write!(f, "column mismatch: expected {expected:?}, got {got:?}")
            }
        }
    }
}

impl std::error::Error for MatrixError {}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        let width = columns.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(MatrixError::RaggedRow {
                    row: i,
                    len: row.len(),
                    expected: width,
                });
            }
        }
        Ok(FeatureMatrix { columns, rows })
    }

    pub fn empty(columns: Vec<String>) -> Self {
        FeatureMatrix {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[index])
    }

    /// Projects the matrix onto the named columns, in the order given.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix, MatrixError> {
        let mut indices = Vec::with_capacity(names.len());
        for name in names {
            match self.column_index(name) {
                Some(i) => indices.push(i),
                None => return Err(MatrixError::UnknownColumn(name.clone())),
            }
        }
        let rows = self
            .rows
            .iter()
            .map(|r| indices.iter().map(|&i| r[i]).collect())
            .collect();
        Ok(FeatureMatrix {
            columns: names.to_vec(),
            rows,
        })
    }

    /// Appends the rows of `other`; the column sets must match exactly.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, MatrixError> {
        if self.columns != other.columns {
            return Err(MatrixError::ColumnMismatch {
                expected: self.columns.clone(),
                got: other.columns.clone(),
            });
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(FeatureMatrix {
            columns: self.columns.clone(),
            rows,
        })
    }
}
