//! Deterministic inputs shared by the benchmarks.

/// Cheap deterministic pseudo-random value in [0, 1) from two indices.
pub fn noise(i: usize, j: usize) -> f64 {
    let x = ((i as f64 + 1.0) * 12.9898 + (j as f64 + 1.0) * 78.233).sin() * 43758.5453;
    x - x.floor()
}

/// `n` rows of `p` features with a target driven by the first feature.
pub fn regression_data(n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..p).map(|j| noise(i, j)).collect()).collect();
    let y = rows.iter().enumerate().map(|(i, r)| 3.0 * r[0] + 0.3 * noise(i, p + 7)).collect();
    (rows, y)
}
