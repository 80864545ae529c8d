use super::{fit_tree, Matrix, RegressionTree, TreeError, TreeParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams { trees: 300, learning_rate: 0.1, max_depth: 3, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub initial: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    /// Training MSE after each stage, starting with the constant model.
    pub train_loss: Vec<f64>,
}

/// Normalized gain shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub values: Vec<f64>,
    /// Set when no split had positive gain; values are then all zero.
    pub zero_gain: bool,
}

impl BoostModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.initial + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn importance(&self) -> Importance {
        let mut g = vec![0.0; self.n_features];
        for t in &self.trees {
            for (a, b) in g.iter_mut().zip(t.gains()) {
                *a += b;
            }
        }
        let total: f64 = g.iter().sum();
        if total > 0.0 {
            Importance { values: g.iter().map(|v| v / total).collect(), zero_gain: false }
        } else {
            Importance { values: vec![0.0; self.n_features], zero_gain: true }
        }
    }
}

/// Stagewise squared-loss boosting from the training mean.
pub fn fit_boost(x: &Matrix, y: &[f64], params: &BoostParams) -> Result<BoostModel, TreeError> {
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(TreeError::Param(format!("learning rate {} outside (0, 1]", params.learning_rate)));
    }
    if params.trees == 0 {
        return Err(TreeError::Param("need at least one tree".into()));
    }
    if x.nrows() != y.len() {
        return Err(TreeError::Dimension(format!("{} rows vs {} outcomes", x.nrows(), y.len())));
    }
    if y.is_empty() {
        return Err(TreeError::Empty);
    }
    let n = y.len() as f64;
    let initial = y.iter().sum::<f64>() / n;
    let mut pred = vec![initial; y.len()];
    let mse = |p: &[f64]| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let mut train_loss = vec![mse(&pred)];
    let tp = TreeParams { max_depth: Some(params.max_depth), min_leaf: params.min_leaf, ..Default::default() };
    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let tree = fit_tree(x, &resid, &tp, 0)?;
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(x.row(i));
        }
        train_loss.push(mse(&pred));
        trees.push(tree);
    }
    Ok(BoostModel { initial, learning_rate: params.learning_rate, trees, n_features: x.ncols(), train_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn loss_is_non_increasing_at_full_rate() {
        let mut r = rng::stream(3, "boost");
        let rows: Vec<Vec<f64>> = (0..120).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|v| (v[0] * 6.0).sin() + v[1]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_boost(&x, &y, &BoostParams { trees: 30, learning_rate: 1.0, max_depth: 4, min_leaf: 1 }).unwrap();
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn constant_outcome_flags_zero_gain() {
        let x = Matrix::from_columns(&[(0..10).map(f64::from).collect()]).unwrap();
        let m = fit_boost(&x, &[1.0; 10], &BoostParams { trees: 3, ..Default::default() }).unwrap();
        let imp = m.importance();
        assert!(imp.zero_gain && imp.values == vec![0.0]);
        assert_eq!(m.predict_row(&[3.0]), 1.0);
    }

    #[test]
    fn rejects_bad_rate() {
        let x = Matrix::from_columns(&[vec![0.0, 1.0]]).unwrap();
        assert!(fit_boost(&x, &[0.0, 1.0], &BoostParams { learning_rate: 0.0, ..Default::default() }).is_err());
        assert!(fit_boost(&x, &[0.0, 1.0], &BoostParams { learning_rate: 1.5, ..Default::default() }).is_err());
    }
}
