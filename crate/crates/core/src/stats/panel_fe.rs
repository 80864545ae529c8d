use super::{fit_ols, Covariance, Design, StatsError};
use crate::sim::TrialPanel;
use crate::types::{week_of_day, Arm, Resource};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One unit-period observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeObs {
    pub unit: String,
    pub period: u32,
    pub y: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Clustered by unit.
    pub se: Vec<f64>,
    /// Two-sided, t with `df` degrees of freedom.
    pub p: Vec<f64>,
    pub df: f64,
    /// Regressors swept out by the fixed effects.
    pub absorbed: Vec<String>,
    /// Units with a single observation.
    pub dropped: Vec<String>,
    pub n: usize,
}

impl FeFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }
}

const SWEEP_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 10_000;

/// Two-way demeaning by alternating projections.
fn demean(v: &mut [f64], units: &[usize], periods: &[usize], n_units: usize, n_periods: usize) {
    let project = |v: &mut [f64], g: &[usize], ng: usize| {
        let mut sum = vec![0.0; ng];
        let mut cnt = vec![0usize; ng];
        for (i, &gi) in g.iter().enumerate() {
            sum[gi] += v[i];
            cnt[gi] += 1;
        }
        let mut change: f64 = 0.0;
        for (i, &gi) in g.iter().enumerate() {
            let m = sum[gi] / cnt[gi] as f64;
            v[i] -= m;
            change = change.max(m.abs());
        }
        change
    };
    let scale = v.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    for _ in 0..MAX_SWEEPS {
        let a = project(v, units, n_units);
        let b = project(v, periods, n_periods);
        if a.max(b) <= SWEEP_TOL * scale {
            break;
        }
    }
}

/// Unit and period fixed effects, unit-clustered standard errors.
pub fn panel_fe(obs: &[FeObs], names: &[String]) -> Result<FeFit, StatsError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in obs {
        if o.x.len() != names.len() {
            return Err(StatsError::Dimension(format!("{} regressors for {} names", o.x.len(), names.len())));
        }
        *counts.entry(o.unit.as_str()).or_default() += 1;
    }
    let dropped: Vec<String> = counts.iter().filter(|(_, &c)| c < 2).map(|(u, _)| u.to_string()).collect();
    if !dropped.is_empty() {
        log::info!("panel fixed effects: dropping {} singleton unit(s)", dropped.len());
    }
    let kept: Vec<&FeObs> = obs.iter().filter(|o| counts[o.unit.as_str()] >= 2).collect();
    if kept.is_empty() {
        return Err(StatsError::Empty("no unit with two or more periods".into()));
    }
    let index = |keys: Vec<String>| {
        let map: BTreeMap<String, usize> =
            keys.iter().cloned().collect::<std::collections::BTreeSet<_>>().into_iter().zip(0..).collect();
        let idx: Vec<usize> = keys.iter().map(|k| map[k]).collect();
        (idx, map.len())
    };
    let (units, nu) = index(kept.iter().map(|o| o.unit.clone()).collect());
    let (periods, np) = index(kept.iter().map(|o| format!("{:010}", o.period)).collect());

    let mut y: Vec<f64> = kept.iter().map(|o| o.y).collect();
    demean(&mut y, &units, &periods, nu, np);
    let mut cols = Vec::new();
    let mut kept_names = Vec::new();
    let mut absorbed = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let mut c: Vec<f64> = kept.iter().map(|o| o.x[j]).collect();
        let raw = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        demean(&mut c, &units, &periods, nu, np);
        let after = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if after <= 1e-9 * (1.0 + raw) {
            absorbed.push(name.clone());
        } else {
            cols.push(c);
            kept_names.push(name.clone());
        }
    }
    if cols.is_empty() {
        return Err(StatsError::Empty("every regressor is absorbed by the fixed effects".into()));
    }
    let design = Design::from_columns(kept_names.clone(), &cols)?;
    let keys: Vec<String> = kept.iter().map(|o| o.unit.clone()).collect();
    let m = fit_ols(&design, &y, &Covariance::ClusterRobust(keys))?;
    let se: Vec<f64> = (0..m.k).map(|j| m.vcov[(j, j)].max(0.0).sqrt()).collect();
    Ok(FeFit {
        p: (0..m.k).map(|j| super::inference::t_two_sided(m.coef[j] / se[j], m.df)).collect(),
        se,
        coef: m.coef.iter().copied().collect(),
        names: kept_names,
        df: m.df,
        absorbed,
        dropped,
        n: kept.len(),
    })
}

/// Participant-week means of valid days with `T1:post` and `T2:post` regressors.
pub fn panel_fe_from_trial(panel: &TrialPanel, resource: Resource) -> Result<FeFit, StatsError> {
    let mut cells: BTreeMap<(&str, u32), (f64, usize, Arm, bool)> = BTreeMap::new();
    for r in panel.rows.iter().filter(|r| r.resource == resource) {
        if panel.is_excluded(&r.participant_id, resource) {
            continue;
        }
        if let Some(v) = r.valid() {
            let e = cells.entry((r.participant_id.as_str(), week_of_day(r.day))).or_insert((0.0, 0, r.arm, r.round > 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let obs: Vec<FeObs> = cells
        .into_iter()
        .map(|((pid, week), (sum, n, arm, post))| FeObs {
            unit: pid.to_string(),
            period: week,
            y: sum / n as f64,
            x: vec![f64::from(post && arm == Arm::T1), f64::from(post && arm == Arm::T2)],
        })
        .collect();
    panel_fe(&obs, &["T1:post".to_string(), "T2:post".to_string()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(unit: &str, period: u32, y: f64, x: Vec<f64>) -> FeObs {
        FeObs { unit: unit.into(), period, y, x }
    }

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_by_two_is_diff_in_diff() {
        let obs = vec![
            o("a", 0, 3.0, vec![0.0]),
            o("a", 1, 3.5, vec![0.0]),
            o("b", 0, 4.0, vec![0.0]),
            o("b", 1, 3.2, vec![1.0]),
        ];
        let fit = panel_fe(&obs, &names(&["treat"])).unwrap();
        let did = (3.2 - 4.0) - (3.5 - 3.0);
        assert!((fit.coef[0] - did).abs() < 1e-10);
    }

    #[test]
    fn time_invariant_regressor_is_absorbed() {
        let mut obs = Vec::new();
        for (u, t) in [("a", 0.0), ("b", 1.0), ("c", 0.0), ("d", 1.0)] {
            for p in 0..3 {
                let d = f64::from(p == 2 && t > 0.0);
                obs.push(o(u, p, 1.0 + p as f64 * 0.1 + d * 0.5 + (u.as_bytes()[0] as f64) * 0.01, vec![d, 7.0 * t]));
            }
        }
        let fit = panel_fe(&obs, &names(&["treat", "invariant"])).unwrap();
        assert_eq!(fit.absorbed, vec!["invariant".to_string()]);
        assert!((fit.coef[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unit_shift_leaves_estimates_unchanged_and_singletons_drop() {
        let mut obs = Vec::new();
        for (k, u) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            for p in 0..4u32 {
                let d = f64::from(k % 2 == 1 && p >= 2);
                obs.push(o(u, p, (k * 3 + p as usize * 5 % 7) as f64 * 0.1 - 0.3 * d, vec![d]));
            }
        }
        obs.push(o("solo", 0, 9.0, vec![0.0]));
        let a = panel_fe(&obs, &names(&["treat"])).unwrap();
        assert_eq!(a.dropped, vec!["solo".to_string()]);
        for ob in obs.iter_mut().filter(|ob| ob.unit == "c") {
            ob.y += 42.0;
        }
        let b = panel_fe(&obs, &names(&["treat"])).unwrap();
        assert!((a.coef[0] - b.coef[0]).abs() < 1e-9);
    }
}
