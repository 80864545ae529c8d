use super::{arm_design, fit_ols, AdjustedModel, Covariance, Design, StatsError, Unit};
use crate::types::Resource;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    /// `omnibus`, `T1-C`, `T2-C` or `T2-T1`.
    pub label: String,
    /// `None` for the omnibus test.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    /// t statistic, or the Wald chi-square for the omnibus test.
    pub statistic: f64,
    pub p: f64,
}

pub(crate) fn t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { 1.0 } else { 0.0 };
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Omnibus Wald test on both arm coefficients plus the three pairwise contrasts.
pub fn contrasts(model: &AdjustedModel) -> Result<Vec<ContrastResult>, StatsError> {
    let i1 = model.index("T1").ok_or_else(|| StatsError::MissingArm("T1".into()))?;
    let i2 = model.index("T2").ok_or_else(|| StatsError::MissingArm("T2".into()))?;
    let b = DVector::from_vec(vec![model.coef[i1], model.coef[i2]]);
    let v = DMatrix::from_fn(2, 2, |r, c| model.vcov[([i1, i2][r], [i1, i2][c])]);
    let wald = match v.clone().try_inverse() {
        Some(inv) => (b.transpose() * inv * &b)[(0, 0)].max(0.0),
        None => f64::INFINITY,
    };
    let chi = ChiSquared::new(2.0).expect("valid");
    let mut out = vec![ContrastResult {
        label: "omnibus".into(),
        estimate: None,
        se: None,
        statistic: wald,
        p: if wald.is_finite() { chi.sf(wald).clamp(0.0, 1.0) } else { 0.0 },
    }];
    let linear = |label: &str, w1: f64, w2: f64| {
        let est = w1 * model.coef[i1] + w2 * model.coef[i2];
        let var = w1 * w1 * model.vcov[(i1, i1)] + w2 * w2 * model.vcov[(i2, i2)] + 2.0 * w1 * w2 * model.vcov[(i1, i2)];
        let se = var.max(0.0).sqrt();
        let t = est / se;
        ContrastResult { label: label.into(), estimate: Some(est), se: Some(se), statistic: t, p: t_two_sided(t, model.df) }
    };
    out.push(linear("T1-C", 1.0, 0.0));
    out.push(linear("T2-C", 0.0, 1.0));
    out.push(linear("T2-T1", -1.0, 1.0));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingRates {
    pub baseline_mean: f64,
    /// Predicted intervention consumption for C, T1, T2 at covariate means.
    pub predicted: [f64; 3],
    pub rates: [f64; 3],
}

/// Adjusted saving rate per arm: 1 - prediction at covariate means / baseline mean.
pub fn saving_rate(model: &AdjustedModel, baseline_mean: f64) -> Result<SavingRates, StatsError> {
    if !(baseline_mean > 0.0) {
        return Err(StatsError::NonPositiveBaseline(baseline_mean));
    }
    let i1 = model.index("T1").ok_or_else(|| StatsError::MissingArm("T1".into()))?;
    let i2 = model.index("T2").ok_or_else(|| StatsError::MissingArm("T2".into()))?;
    let common: f64 = (0..model.k)
        .filter(|&j| j != i1 && j != i2)
        .map(|j| model.coef[j] * model.column_means[j])
        .sum();
    let predicted = [common, common + model.coef[i1], common + model.coef[i2]];
    Ok(SavingRates { baseline_mean, predicted, rates: predicted.map(|p| 1.0 - p / baseline_mean) })
}

/// Adjusted arm model on intervention means, clustered by assignment cluster.
pub fn fit_arm_model(units: &[Unit], covariates: bool) -> Result<AdjustedModel, StatsError> {
    let (design, y, kept) = arm_design(units, |u| Some(u.outcome), covariates)?;
    let keys = kept.iter().map(|&i| units[i].cluster_id.to_string()).collect();
    fit_ols(&design, &y, &Covariance::ClusterRobust(keys))
}

/// Z-scores with the sample standard deviation.
pub fn standardize(xs: &[f64]) -> Result<(Vec<f64>, f64, f64), StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::Empty("need at least two values to standardize".into()));
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(StatsError::ZeroVariance("values".into()));
    }
    Ok((xs.iter().map(|x| (x - m) / sd).collect(), m, sd))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledModel {
    pub model: AdjustedModel,
    /// (resource, outcome mean, outcome sd) used for standardization.
    pub scales: Vec<(Resource, f64, f64)>,
}

/// Stack z-scored resource slices and fit with participant-clustered SEs.
pub fn pool_slices(slices: &[&[Unit]]) -> Result<PooledModel, StatsError> {
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut keys = Vec::new();
    let mut scales = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let multi = slices.len() > 1;
    for (s, units) in slices.iter().enumerate() {
        if units.is_empty() {
            return Err(StatsError::Empty("resource slice".into()));
        }
        let resource = units[0].resource;
        let zero = |e: StatsError| match e {
            StatsError::ZeroVariance(_) => StatsError::ZeroVariance(format!("{resource} outcome or baseline")),
            other => other,
        };
        let (zy, my, sy) = standardize(&units.iter().map(|u| u.outcome).collect::<Vec<_>>()).map_err(zero)?;
        let (zb, _, _) = standardize(&units.iter().map(|u| u.baseline).collect::<Vec<_>>()).map_err(zero)?;
        scales.push((resource, my, sy));
        let mut z_units: Vec<Unit> = units.to_vec();
        for (u, b) in z_units.iter_mut().zip(&zb) {
            u.baseline = *b;
        }
        let (d, _, kept) = arm_design(&z_units, |_| Some(0.0), true)?;
        let mut n = d.names.clone();
        if multi {
            n.extend((1..slices.len()).map(|j| format!("resource_{j}")));
        }
        names.get_or_insert(n);
        for (row, &i) in kept.iter().enumerate() {
            let mut r: Vec<f64> = d.x.row(row).iter().copied().collect();
            if multi {
                r.extend((1..slices.len()).map(|j| f64::from(j == s)));
            }
            x_rows.push(r);
            y.push(zy[i]);
            keys.push(z_units[i].participant_id.clone());
        }
    }
    let names = names.ok_or_else(|| StatsError::Empty("no slices".into()))?;
    let cols: Vec<Vec<f64>> = (0..names.len()).map(|j| x_rows.iter().map(|r| r[j]).collect()).collect();
    let design = Design::from_columns(names, &cols)?;
    let model = fit_ols(&design, &y, &Covariance::ClusterRobust(keys))?;
    Ok(PooledModel { model, scales })
}

pub fn pool_standardized(electricity: &[Unit], hot_water: &[Unit]) -> Result<PooledModel, StatsError> {
    pool_slices(&[electricity, hot_water])
}
