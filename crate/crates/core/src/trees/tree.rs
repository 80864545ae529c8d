use super::{Matrix, TreeError};
use crate::rng;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` tries all.
    pub max_features: Option<usize>,
    /// Feature added to every subsampled candidate set.
    #[serde(default)]
    pub always_try: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_leaf: 5, max_features: None, always_try: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64, n: usize },
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, gain: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    /// Split gain accumulated per feature.
    pub fn gains(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                g[*feature] += gain;
            }
        }
        g
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best split of `idx` on `feature`, scanning midpoints between sorted unique values.
fn best_on_feature(x: &Matrix, y: &[f64], idx: &mut [usize], feature: usize, min_leaf: usize, center: f64) -> Option<Best> {
    idx.sort_by(|&a, &b| x.get(a, feature).total_cmp(&x.get(b, feature)));
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i] - center).sum();
    let parent = total * total / n as f64;
    let mut left = 0.0;
    let mut best: Option<Best> = None;
    for k in 1..n {
        left += y[idx[k - 1]] - center;
        let (lo, hi) = (x.get(idx[k - 1], feature), x.get(idx[k], feature));
        if lo == hi || k < min_leaf || n - k < min_leaf {
            continue;
        }
        let right = total - left;
        let gain = left * left / k as f64 + right * right / (n - k) as f64 - parent;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Best { feature, threshold: lo + (hi - lo) / 2.0, gain });
        }
    }
    best
}

/// CART regression tree on squared error.
///
/// Ties between candidate splits go to the lower feature index, then the
/// lower threshold. `seed` only matters when `max_features` subsamples.
pub fn fit_tree(x: &Matrix, y: &[f64], params: &TreeParams, seed: u64) -> Result<RegressionTree, TreeError> {
    if x.nrows() != y.len() {
        return Err(TreeError::Dimension(format!("{} rows vs {} outcomes", x.nrows(), y.len())));
    }
    if y.is_empty() {
        return Err(TreeError::Empty);
    }
    if params.min_leaf == 0 {
        return Err(TreeError::Param("min_leaf must be at least 1".into()));
    }
    let p = x.ncols();
    let mtry = params.max_features.map_or(p, |m| m.clamp(1, p.max(1)));
    let mut r = rng::stream(seed, "tree/features");
    let mut tree = RegressionTree { nodes: Vec::new(), n_features: p };
    let mut stack = vec![(0usize, (0..y.len()).collect::<Vec<usize>>(), 0usize)];
    tree.nodes.push(Node::Leaf { value: 0.0, n: 0 });
    while let Some((slot, mut idx, depth)) = stack.pop() {
        let n = idx.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        let sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        let can_split = n >= 2 * params.min_leaf && params.max_depth.is_none_or(|d| depth < d) && sse > 0.0;
        let mut best: Option<Best> = None;
        if can_split && p > 0 {
            let mut feats: Vec<usize> = if mtry < p { sample(&mut r, p, mtry).into_vec() } else { (0..p).collect() };
            if let Some(f) = params.always_try.filter(|&f| f < p && !feats.contains(&f)) {
                feats.push(f);
            }
            feats.sort_unstable();
            for f in feats {
                if let Some(b) = best_on_feature(x, y, &mut idx, f, params.min_leaf, mean) {
                    if best.as_ref().is_none_or(|cur| b.gain > cur.gain) {
                        best = Some(b);
                    }
                }
            }
        }
        match best {
            Some(b) if b.gain > 1e-12 * sse.max(f64::MIN_POSITIVE) && b.gain > 0.0 => {
                let (l, rr): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, b.feature) < b.threshold);
                let left = tree.nodes.len();
                tree.nodes.push(Node::Leaf { value: 0.0, n: 0 });
                tree.nodes.push(Node::Leaf { value: 0.0, n: 0 });
                tree.nodes[slot] = Node::Split { feature: b.feature, threshold: b.threshold, gain: b.gain, left, right: left + 1 };
                stack.push((left + 1, rr, depth + 1));
                stack.push((left, l, depth + 1));
            }
            _ => tree.nodes[slot] = Node::Leaf { value: mean, n },
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_split_at_midpoint() {
        let xs = [0.0, 0.1, 0.2, 0.3, 0.7, 0.8, 0.9, 1.0];
        let x = Matrix::from_columns(&[xs.to_vec()]).unwrap();
        let y: Vec<f64> = xs.iter().map(|&v| if v < 0.5 { 1.0 } else { 3.0 }).collect();
        let t = fit_tree(&x, &y, &TreeParams { min_leaf: 1, ..Default::default() }, 0).unwrap();
        match t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(t.predict_row(&[0.2]), 1.0);
        assert_eq!(t.predict_row(&[0.8]), 3.0);
        assert_eq!(t.leaves(), 2);
    }

    #[test]
    fn constant_outcome_and_large_min_leaf_give_single_leaf() {
        let x = Matrix::from_columns(&[(0..10).map(f64::from).collect()]).unwrap();
        let t = fit_tree(&x, &[2.5; 10], &TreeParams::default(), 0).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 2.5, n: 10 }]);
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let t = fit_tree(&x, &y, &TreeParams { min_leaf: 10, ..Default::default() }, 0).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 4.5, n: 10 }]);
    }

    #[test]
    fn tie_goes_to_lower_feature() {
        let col: Vec<f64> = vec![0.0, 0.0, 1.0, 1.0];
        let x = Matrix::from_columns(&[col.clone(), col]).unwrap();
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], &TreeParams { min_leaf: 1, ..Default::default() }, 0).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_limit_is_respected() {
        let x = Matrix::from_columns(&[(0..64).map(f64::from).collect()]).unwrap();
        let y: Vec<f64> = (0..64).map(|i| f64::from(i * i % 13)).collect();
        let t = fit_tree(&x, &y, &TreeParams { max_depth: Some(2), min_leaf: 1, ..Default::default() }, 0).unwrap();
        assert!(t.leaves() <= 4);
    }

    #[test]
    fn always_try_feature_wins_when_informative() {
        // Feature 3 alone separates the outcome; with one random candidate
        // per split it is still found at the root on every seed.
        let n = 40;
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..n).map(|i| if j == 3 { f64::from(i % 2) } else { f64::from((i * (j + 3)) % 7) }).collect())
            .collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let y: Vec<f64> = (0..n).map(|i| 10.0 * f64::from(i % 2)).collect();
        for seed in 0..10 {
            let params = TreeParams { max_features: Some(1), always_try: Some(3), min_leaf: 1, ..Default::default() };
            let t = fit_tree(&x, &y, &params, seed).unwrap();
            assert!(matches!(t.nodes[0], Node::Split { feature: 3, .. }), "seed {seed}");
        }
    }
}
