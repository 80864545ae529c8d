use super::{fit_tree, Matrix, RegressionTree, TreeError, TreeParams};
use crate::rng;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ⌈√p⌉.
    pub max_features: Option<usize>,
    /// Feature tried at every split regardless of subsampling.
    #[serde(default)]
    pub always_try: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 2000, bootstrap: true, max_depth: None, min_leaf: 5, max_features: None, always_try: None }
    }
}

impl ForestParams {
    pub fn with_trees(trees: usize) -> Self {
        ForestParams { trees, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub tree_seeds: Vec<u64>,
    pub params: ForestParams,
    pub training_mean: f64,
    /// Training-row predictions from trees that did not see the row;
    /// rows in every bootstrap sample fall back to the full forest.
    pub oob_predictions: Vec<f64>,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return self.training_mean;
        }
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn gains(&self) -> Vec<f64> {
        let p = self.trees.first().map_or(0, |t| t.n_features);
        let mut g = vec![0.0; p];
        for t in &self.trees {
            for (a, b) in g.iter_mut().zip(t.gains()) {
                *a += b;
            }
        }
        g
    }
}

/// Bagged regression trees, one seeded stream per tree.
pub fn fit_forest(x: &Matrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel, TreeError> {
    if x.nrows() != y.len() {
        return Err(TreeError::Dimension(format!("{} rows vs {} outcomes", x.nrows(), y.len())));
    }
    if y.is_empty() {
        return Err(TreeError::Empty);
    }
    let n = y.len();
    let p = x.ncols();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: Some(params.max_features.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)),
        always_try: params.always_try,
    };
    let tree_seeds: Vec<u64> = (0..params.trees).map(|t| rng::derive_indexed(seed, "forest/tree", t as u64)).collect();
    let fitted: Vec<(RegressionTree, Vec<bool>)> = tree_seeds
        .par_iter()
        .map(|&s| {
            let (rows, inbag) = if params.bootstrap {
                let mut r = rng::stream(s, "bootstrap");
                let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                let mut inbag = vec![false; n];
                for &i in &rows {
                    inbag[i] = true;
                }
                (rows, inbag)
            } else {
                ((0..n).collect(), vec![true; n])
            };
            let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let tree = fit_tree(&x.select(&rows), &ys, &tree_params, s)?;
            Ok((tree, inbag))
        })
        .collect::<Result<_, TreeError>>()?;

    let training_mean = y.iter().sum::<f64>() / n as f64;
    let mut oob_sum = vec![0.0; n];
    let mut oob_cnt = vec![0usize; n];
    for (tree, inbag) in &fitted {
        for i in (0..n).filter(|&i| !inbag[i]) {
            oob_sum[i] += tree.predict_row(x.row(i));
            oob_cnt[i] += 1;
        }
    }
    let trees: Vec<RegressionTree> = fitted.into_iter().map(|(t, _)| t).collect();
    let mut model = ForestModel { trees, tree_seeds, params: *params, training_mean, oob_predictions: Vec::new() };
    model.oob_predictions =
        (0..n).map(|i| if oob_cnt[i] > 0 { oob_sum[i] / oob_cnt[i] as f64 } else { model.predict_row(x.row(i)) }).collect();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fit_tree;

    fn linear(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut r = rng::stream(seed, "data");
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let y = xs.iter().map(|v| 2.0 * v + r.random_range(-0.1..0.1)).collect();
        (Matrix::from_columns(&[xs]).unwrap(), y)
    }

    #[test]
    fn single_unbagged_tree_matches_fit_tree() {
        let (x, y) = linear(100, 1);
        let params = ForestParams { trees: 1, bootstrap: false, max_features: Some(1), ..Default::default() };
        let f = fit_forest(&x, &y, &params, 9).unwrap();
        let t = fit_tree(&x, &y, &TreeParams { max_features: Some(1), ..Default::default() }, 0).unwrap();
        assert_eq!(f.predict(&x), t.predict(&x));
    }

    #[test]
    fn forest_beats_single_tree_on_holdout() {
        let (x, y) = linear(500, 2);
        let (xt, yt) = linear(500, 3);
        let mse = |p: Vec<f64>| p.iter().zip(&yt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / yt.len() as f64;
        let f = fit_forest(&x, &y, &ForestParams::with_trees(100), 4).unwrap();
        let t = fit_tree(&x, &y, &TreeParams { min_leaf: 1, ..Default::default() }, 0).unwrap();
        assert!(mse(f.predict(&xt)) < mse(t.predict(&xt)));
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let (x, y) = linear(80, 5);
        let a = fit_forest(&x, &y, &ForestParams::with_trees(20), 7).unwrap();
        let b = fit_forest(&x, &y, &ForestParams::with_trees(20), 7).unwrap();
        assert_eq!(a, b);
        let mut rev = a.clone();
        rev.trees.reverse();
        for i in 0..x.nrows() {
            assert!((a.predict_row(x.row(i)) - rev.predict_row(x.row(i))).abs() < 1e-12);
        }
    }
}
