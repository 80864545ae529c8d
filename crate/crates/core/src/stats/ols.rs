use super::StatsError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Named design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

impl Design {
    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self, StatsError> {
        if names.len() != columns.len() || columns.is_empty() {
            return Err(StatsError::Dimension("one name per column required".into()));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(StatsError::Dimension("columns differ in length".into()));
        }
        let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Ok(Design { names, x })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Covariance {
    Iid,
    /// Sandwich estimator clustered on the given per-row keys.
    ClusterRobust(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedModel {
    pub names: Vec<String>,
    pub coef: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    pub n: usize,
    pub k: usize,
    /// Residual degrees of freedom used for t tests.
    pub df: f64,
    pub clusters: Option<usize>,
    pub r_squared: f64,
    /// Column means of the design, for predictions at covariate means.
    pub column_means: DVector<f64>,
}

impl AdjustedModel {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coef[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.vcov[(i, i)].max(0.0).sqrt())
    }
}

/// Indices of columns that add nothing to the span of earlier ones.
fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        // second pass for numerical stability
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= 1e-9 * norm.max(1.0) {
            bad.push(j);
        } else {
            basis.push(v / rest);
        }
    }
    bad
}

/// Least squares with iid or cluster-robust covariance.
pub fn fit_ols(design: &Design, y: &[f64], cov: &Covariance) -> Result<AdjustedModel, StatsError> {
    let x = &design.x;
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(StatsError::Dimension(format!("{} outcomes for {n} rows", y.len())));
    }
    if n <= k {
        return Err(StatsError::TooFewObservations { n, k });
    }
    let bad = collinear_columns(x);
    if !bad.is_empty() {
        return Err(StatsError::RankDeficient(bad.into_iter().map(|j| design.names[j].clone()).collect()));
    }
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &yv;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| StatsError::RankDeficient(design.names.clone()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| StatsError::RankDeficient(design.names.clone()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let fitted = x * &coef;
    let residuals = &yv - &fitted;
    let ssr = residuals.norm_squared();
    let ybar = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    let (vcov, df, clusters) = match cov {
        Covariance::Iid => {
            let sigma2 = ssr / (n - k) as f64;
            (&xtx_inv * sigma2, (n - k) as f64, None)
        }
        Covariance::ClusterRobust(keys) => {
            if keys.len() != n {
                return Err(StatsError::Dimension(format!("{} cluster keys for {n} rows", keys.len())));
            }
            let mut groups: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
            for i in 0..n {
                let score = x.row(i).transpose() * residuals[i];
                groups
                    .entry(keys[i].as_str())
                    .and_modify(|s| *s += &score)
                    .or_insert(score);
            }
            let g = groups.len();
            if g < 2 {
                return Err(StatsError::TooFewObservations { n: g, k: 2 });
            }
            let mut meat = DMatrix::zeros(k, k);
            for s in groups.values() {
                meat += s * s.transpose();
            }
            let correction = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - k) as f64);
            (&xtx_inv * meat * &xtx_inv * correction, (g - 1) as f64, Some(g))
        }
    };
    let column_means = DVector::from_fn(k, |j, _| x.column(j).mean());
    Ok(AdjustedModel {
        names: design.names.clone(),
        coef,
        vcov,
        residuals,
        fitted,
        n,
        k,
        df,
        clusters,
        r_squared,
        column_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(cols: &[(&str, Vec<f64>)]) -> Design {
        Design::from_columns(cols.iter().map(|c| c.0.to_string()).collect(), &cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn identity_regression() {
        let z = vec![1.0, 3.0, 2.0, 5.0, 4.0];
        let d = design(&[("intercept", vec![1.0; 5]), ("z", z.clone())]);
        let m = fit_ols(&d, &z, &Covariance::Iid).unwrap();
        assert!((m.coefficient("z").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let d = design(&[("intercept", vec![1.0; 4]), ("a", a.clone()), ("twice_a", a.iter().map(|v| 2.0 * v).collect())]);
        assert_eq!(
            fit_ols(&d, &[1.0, 2.0, 2.0, 3.0], &Covariance::Iid),
            Err(StatsError::RankDeficient(vec!["twice_a".into()]))
        );
    }

    #[test]
    fn equal_group_means_give_zero_arm_coefficient() {
        let d = design(&[("intercept", vec![1.0; 6]), ("T2", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0])]);
        let m = fit_ols(&d, &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0], &Covariance::Iid).unwrap();
        assert!(m.coefficient("T2").unwrap().abs() < 1e-12);
    }

    #[test]
    fn singleton_clusters_equal_hc1() {
        let x = vec![0.5, 1.5, 2.0, 3.5, 4.0, 6.0, 7.5];
        let y = vec![1.0, 2.5, 2.0, 5.0, 4.5, 8.0, 7.0];
        let d = design(&[("intercept", vec![1.0; 7]), ("x", x.clone())]);
        let keys: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        let m = fit_ols(&d, &y, &Covariance::ClusterRobust(keys)).unwrap();
        // HC1 = n/(n-k) (X'X)^-1 X' diag(u^2) X (X'X)^-1
        let xm = &d.x;
        let xtx_inv = (xm.transpose() * xm).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..7 {
            let row = xm.row(i).transpose();
            meat += &row * row.transpose() * m.residuals[i].powi(2);
        }
        let hc1 = &xtx_inv * meat * &xtx_inv * (7.0 / 5.0);
        assert!((m.vcov.clone() - hc1).abs().max() < 1e-12);
    }
}
