//! Regression trees, bagged forests and gradient-boosted ensembles.

mod boost;
mod forest;
mod tree;

pub use boost::{fit_boost, BoostModel, BoostParams, Importance};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use tree::{fit_tree, Node, RegressionTree, TreeParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("no training rows")]
    Empty,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("model file: {0}")]
    Format(String),
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TreeError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(TreeError::Dimension(format!("row {bad} has {} values, expected {cols}", rows[bad].len())));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, TreeError> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(TreeError::Dimension("columns differ in length".into()));
        }
        let data = (0..rows).flat_map(|i| columns.iter().map(move |c| c[i])).collect();
        Ok(Matrix { rows, cols: columns.len(), data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// Copy with one extra trailing column.
    pub fn with_column(&self, col: &[f64]) -> Matrix {
        let data = (0..self.rows).flat_map(|i| self.row(i).iter().copied().chain([col[i]])).collect();
        Matrix { rows: self.rows, cols: self.cols + 1, data }
    }
}

/// Serializable model of any kind, tagged with a format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Tree(RegressionTree),
    Forest(ForestModel),
    Boost(BoostModel),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: SavedModel,
}

impl SavedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile { version: MODEL_FORMAT_VERSION, model: self.clone() }).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| TreeError::Format(e.to_string()))?;
        match v.get("version").and_then(|v| v.as_u64()) {
            Some(x) if x == MODEL_FORMAT_VERSION as u64 => {}
            other => return Err(TreeError::Format(format!("unsupported version {other:?}"))),
        }
        let f: ModelFile = serde_json::from_value(v).map_err(|e| TreeError::Format(e.to_string()))?;
        Ok(f.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_layouts_agree() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = Matrix::from_columns(&[vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.select(&[2, 0]).row(0), &[5.0, 6.0]);
        assert_eq!(a.with_column(&[7.0, 8.0, 9.0]).row(1), &[3.0, 4.0, 8.0]);
        assert!(Matrix::from_rows(&[vec![1.0], vec![]]).is_err());
    }

    #[test]
    fn saved_model_round_trip_and_version_check() {
        let x = Matrix::from_columns(&[(0..20).map(f64::from).collect()]).unwrap();
        let y: Vec<f64> = (0..20).map(|i| f64::from(i % 7)).collect();
        let m = SavedModel::Boost(fit_boost(&x, &y, &BoostParams { trees: 5, ..Default::default() }).unwrap());
        let text = m.to_json();
        assert_eq!(SavedModel::from_json(&text).unwrap(), m);
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(SavedModel::from_json(&bumped).is_err());
    }
}
