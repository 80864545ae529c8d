//! Individualized treatment effects from S, T, X and doubly-robust
//! meta-learners with cross-fitting, plus a top-quartile responder profile.

use crate::profile::ParticipantProfile;
use crate::rng;
use crate::stats::Unit;
use crate::trees::{fit_forest, ForestModel, ForestParams, Matrix, TreeError};
use crate::types::Arm;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HteError {
    #[error("arm {arm} has {have} participant(s); need at least {need}")]
    TooFewInArm { arm: Arm, have: usize, need: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least {need} scores, got {have}")]
    TooFewScores { have: usize, need: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Contrast {
    T1VsC,
    T2VsC,
}

impl Contrast {
    pub fn treated(self) -> Arm {
        match self {
            Contrast::T1VsC => Arm::T1,
            Contrast::T2VsC => Arm::T2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Contrast::T1VsC => "T1-C",
            Contrast::T2VsC => "T2-C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HteConfig {
    pub folds: usize,
    pub forest: ForestParams,
    pub propensity_clamp: (f64, f64),
}

impl Default for HteConfig {
    fn default() -> Self {
        HteConfig { folds: 5, forest: ForestParams::with_trees(200), propensity_clamp: (0.05, 0.95) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteScore {
    pub participant_id: String,
    pub contrast: Contrast,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub dr: f64,
    pub ensemble: f64,
    pub units: String,
}

/// Inputs for one resource: features, outcomes and arms aligned by row.
#[derive(Debug, Clone)]
pub struct HteData {
    pub ids: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub arms: Vec<Arm>,
    pub units: String,
}

pub const FEATURE_NAMES: [&str; 9] = [
    "baseline",
    "self_efficacy",
    "outcome_expectations",
    "perceived_impediments",
    "attitude",
    "neighborhood_perception",
    "living_budget",
    "female",
    "bill_experience",
];

impl HteData {
    /// Baseline consumption, the five psychological constructs and the
    /// socio-structural variables, with the intervention mean as outcome.
    pub fn from_units(units: &[Unit], unit_label: &str) -> Self {
        let rows: Vec<Vec<f64>> = units
            .iter()
            .map(|u| {
                let c = &u.covariates;
                let mut r = vec![u.baseline];
                r.extend_from_slice(&c.psych);
                r.extend([c.living_budget, c.female, c.bill_experience]);
                r
            })
            .collect();
        HteData {
            ids: units.iter().map(|u| u.participant_id.clone()).collect(),
            x: Matrix::from_rows(&rows).expect("fixed width"),
            y: units.iter().map(|u| u.outcome).collect(),
            arms: units.iter().map(|u| u.arm).collect(),
            units: unit_label.to_string(),
        }
    }
}

/// Fold index per row, dealt round-robin within each arm after a seeded shuffle.
fn stratified_folds(arms: &[Arm], folds: usize, seed: u64) -> Vec<usize> {
    let mut out = vec![0; arms.len()];
    for arm in Arm::ALL {
        let mut idx: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == arm).collect();
        idx.shuffle(&mut rng::stream(seed, &format!("hte/folds/{arm}")));
        for (k, i) in idx.into_iter().enumerate() {
            out[i] = k % folds;
        }
    }
    out
}

fn clamp_propensity(e: f64, (lo, hi): (f64, f64)) -> f64 {
    if e < lo || e > hi {
        log::warn!("propensity {e:.3} outside [{lo}, {hi}]; clamping");
    }
    e.clamp(lo, hi)
}

/// Doubly-robust pseudo-outcome for one row.
pub fn dr_pseudo_outcome(y: f64, treated: bool, mu1: f64, mu0: f64, e: f64) -> f64 {
    let a = f64::from(treated);
    mu1 - mu0 + a * (y - mu1) / e - (1.0 - a) * (y - mu0) / (1.0 - e)
}

struct FoldFit {
    s: Vec<f64>,
    t: Vec<f64>,
    x: Vec<f64>,
    dr: Vec<f64>,
}

fn fit_fold(
    x: &Matrix,
    y: &[f64],
    treated: &[bool],
    train: &[usize],
    test: &[usize],
    e: f64,
    cfg: &HteConfig,
    seed: u64,
) -> Result<FoldFit, HteError> {
    let forest_with = |params: &ForestParams, rows: &[usize], target: &dyn Fn(usize) -> f64, xm: &Matrix, label: &str| -> Result<ForestModel, HteError> {
        let ys: Vec<f64> = rows.iter().map(|&i| target(i)).collect();
        Ok(fit_forest(&xm.select(rows), &ys, params, rng::derive(seed, label))?)
    };
    let forest = |rows: &[usize], target: &dyn Fn(usize) -> f64, xm: &Matrix, label: &str| forest_with(&cfg.forest, rows, target, xm, label);
    let xt = x.select(test);
    let predict = |m: &ForestModel, xm: &Matrix| m.predict(xm);

    // S: one model with the treatment flag as a feature, fitted to the
    // outcome net of an arm-blind prognostic forest so that splits on the
    // flag are not crowded out by the covariates. The flag is a candidate at
    // every split. The offset cancels in the
    // contrast.
    let flag: Vec<f64> = treated.iter().map(|&t| f64::from(t)).collect();
    let xs = x.with_column(&flag);
    let prognostic = forest(train, &|i| y[i], x, "s/prognostic")?;
    let offset: BTreeMap<usize, f64> = train.iter().copied().zip(prognostic.oob_predictions.iter().copied()).collect();
    let s_params = ForestParams { always_try: Some(x.ncols()), ..cfg.forest };
    let s_model = forest_with(&s_params, train, &|i| y[i] - offset[&i], &xs, "s")?;
    let s: Vec<f64> = test
        .iter()
        .map(|&i| {
            let mut row = x.row(i).to_vec();
            row.push(1.0);
            let on = s_model.predict_row(&row);
            *row.last_mut().expect("nonempty") = 0.0;
            on - s_model.predict_row(&row)
        })
        .collect();

    // T: separate outcome models per arm.
    let tr1: Vec<usize> = train.iter().copied().filter(|&i| treated[i]).collect();
    let tr0: Vec<usize> = train.iter().copied().filter(|&i| !treated[i]).collect();
    let mu1 = forest(&tr1, &|i| y[i], x, "mu1")?;
    let mu0 = forest(&tr0, &|i| y[i], x, "mu0")?;
    let (m1t, m0t) = (predict(&mu1, &xt), predict(&mu0, &xt));
    let t: Vec<f64> = m1t.iter().zip(&m0t).map(|(a, b)| a - b).collect();

    // Predictions on training rows; own-arm rows use out-of-bag values.
    let mut mu1_train: BTreeMap<usize, f64> = tr1.iter().copied().zip(mu1.oob_predictions.iter().copied()).collect();
    let mut mu0_train: BTreeMap<usize, f64> = tr0.iter().copied().zip(mu0.oob_predictions.iter().copied()).collect();
    for &i in &tr0 {
        mu1_train.insert(i, mu1.predict_row(x.row(i)));
    }
    for &i in &tr1 {
        mu0_train.insert(i, mu0.predict_row(x.row(i)));
    }

    // X: imputed effects regressed per arm, blended by the treated share.
    let tau1 = forest(&tr1, &|i| y[i] - mu0_train[&i], x, "tau1")?;
    let tau0 = forest(&tr0, &|i| mu1_train[&i] - y[i], x, "tau0")?;
    let xl: Vec<f64> =
        predict(&tau0, &xt).iter().zip(predict(&tau1, &xt)).map(|(t0, t1)| e * t0 + (1.0 - e) * t1).collect();

    // DR: pseudo-outcome regression with known assignment shares.
    let dr_model = forest(train, &|i| dr_pseudo_outcome(y[i], treated[i], mu1_train[&i], mu0_train[&i], e), x, "dr")?;
    let dr = predict(&dr_model, &xt);
    Ok(FoldFit { s, t, x: xl, dr })
}

/// Cross-fitted ITEs for every participant in the contrast's two arms.
///
/// Each participant's scores come only from models trained on the other
/// folds, and nuisance predictions inside a training set never use the
/// held-out fold, so a participant's own outcome never enters their score.
pub fn estimate_ites(data: &HteData, contrast: Contrast, cfg: &HteConfig, seed: u64) -> Result<Vec<IteScore>, HteError> {
    let n = data.ids.len();
    if data.x.nrows() != n || data.y.len() != n || data.arms.len() != n {
        return Err(HteError::Dimension("ids, features, outcomes and arms must align".into()));
    }
    let arm_k = contrast.treated();
    let rows: Vec<usize> = (0..n).filter(|&i| data.arms[i] == arm_k || data.arms[i] == Arm::C).collect();
    let need = cfg.folds.max(2);
    for arm in [Arm::C, arm_k] {
        let have = rows.iter().filter(|&&i| data.arms[i] == arm).count();
        if have < need {
            return Err(HteError::TooFewInArm { arm, have, need });
        }
    }
    let x = data.x.select(&rows);
    let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
    let arms: Vec<Arm> = rows.iter().map(|&i| data.arms[i]).collect();
    let treated: Vec<bool> = arms.iter().map(|&a| a == arm_k).collect();
    let n_sub = rows.len();
    let e = clamp_propensity(treated.iter().filter(|&&t| t).count() as f64 / n_sub as f64, cfg.propensity_clamp);

    let fold_of = stratified_folds(&arms, cfg.folds, rng::derive(seed, contrast.label()));
    let mut out: Vec<Option<IteScore>> = vec![None; n_sub];
    for f in 0..cfg.folds {
        let test: Vec<usize> = (0..n_sub).filter(|&i| fold_of[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let train: Vec<usize> = (0..n_sub).filter(|&i| fold_of[i] != f).collect();
        let fold_seed = rng::derive_indexed(seed, &format!("hte/{}", contrast.label()), f as u64);
        let fit = fit_fold(&x, &y, &treated, &train, &test, e, cfg, fold_seed)?;
        for (k, &i) in test.iter().enumerate() {
            let (s, t, xl, dr) = (fit.s[k], fit.t[k], fit.x[k], fit.dr[k]);
            out[i] = Some(IteScore {
                participant_id: data.ids[rows[i]].clone(),
                contrast,
                s,
                t,
                x: xl,
                dr,
                ensemble: (s + t + xl + dr) / 4.0,
                units: data.units.clone(),
            });
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every row is in one fold")).collect())
}

pub fn write_ite_csv<W: Write>(scores: &[IteScore], out: W) -> Result<(), HteError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "contrast", "s_learner", "t_learner", "x_learner", "dr_learner", "ensemble", "units"])?;
    for s in scores {
        w.write_record([
            s.participant_id.clone(),
            s.contrast.label().to_string(),
            format!("{:.6}", s.s),
            format!("{:.6}", s.t),
            format!("{:.6}", s.x),
            format!("{:.6}", s.dr),
            format!("{:.6}", s.ensemble),
            s.units.clone(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Mean profile of the most-responsive quarter against everyone else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileComparison {
    pub n_top: usize,
    pub n_rest: usize,
    pub top_ids: Vec<String>,
    pub top_mean_psych: f64,
    pub rest_mean_psych: f64,
    pub top_living_budget: f64,
    pub rest_living_budget: f64,
}

/// Top quartile = the ⌈n/4⌉ most negative ensemble scores, ties by id.
pub fn top_quartile_profile(scores: &[IteScore], profiles: &[ParticipantProfile]) -> Result<QuartileComparison, HteError> {
    if scores.len() < 8 {
        return Err(HteError::TooFewScores { have: scores.len(), need: 8 });
    }
    let by_id: BTreeMap<&str, &ParticipantProfile> = profiles.iter().map(|p| (p.participant_id.as_str(), p)).collect();
    let mut sorted: Vec<&IteScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.ensemble.total_cmp(&b.ensemble).then_with(|| a.participant_id.cmp(&b.participant_id)));
    let k = scores.len().div_ceil(4);
    let profile = |s: &IteScore| {
        by_id
            .get(s.participant_id.as_str())
            .copied()
            .ok_or_else(|| HteError::Dimension(format!("no profile for {}", s.participant_id)))
    };
    let mean = |group: &[&IteScore], f: &dyn Fn(&ParticipantProfile) -> f64| -> Result<f64, HteError> {
        let mut sum = 0.0;
        for s in group {
            sum += f(profile(s)?);
        }
        Ok(sum / group.len() as f64)
    };
    let (top, rest) = sorted.split_at(k);
    Ok(QuartileComparison {
        n_top: top.len(),
        n_rest: rest.len(),
        top_ids: top.iter().map(|s| s.participant_id.clone()).collect(),
        top_mean_psych: mean(top, &|p| p.mean_psych())?,
        rest_mean_psych: mean(rest, &|p| p.mean_psych())?,
        top_living_budget: mean(top, &|p| p.socio.living_budget)?,
        rest_living_budget: mean(rest, &|p| p.socio.living_budget)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Gender, PsychScores, Sociodemographics};
    use rand::Rng as _;

    fn synthetic(n: usize, effect: impl Fn(&[f64]) -> f64, noise: f64, seed: u64) -> HteData {
        let mut r = rng::stream(seed, "synthetic");
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut arms = Vec::new();
        for i in 0..n {
            let x = vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
            let arm = if i % 2 == 0 { Arm::C } else { Arm::T2 };
            let base = 3.0 + 2.0 * x[0];
            let tau = if arm == Arm::T2 { effect(&x) } else { 0.0 };
            y.push(base + tau + noise * r.random_range(-1.0..1.0));
            rows.push(x);
            arms.push(arm);
        }
        HteData {
            ids: (0..n).map(|i| format!("P{i:03}")).collect(),
            x: Matrix::from_rows(&rows).unwrap(),
            y,
            arms,
            units: "kWh".into(),
        }
    }

    fn small_cfg() -> HteConfig {
        HteConfig { forest: ForestParams::with_trees(40), ..Default::default() }
    }

    #[test]
    fn ensemble_is_mean_of_learners() {
        let data = synthetic(60, |_| -0.5, 0.2, 1);
        let scores = estimate_ites(&data, Contrast::T2VsC, &small_cfg(), 3).unwrap();
        assert_eq!(scores.len(), 60);
        for s in &scores {
            assert_eq!(s.ensemble, (s.s + s.t + s.x + s.dr) / 4.0);
        }
    }

    #[test]
    fn own_outcome_never_enters_own_score() {
        let data = synthetic(50, |x| -0.5 * x[1], 0.2, 2);
        let base = estimate_ites(&data, Contrast::T2VsC, &small_cfg(), 5).unwrap();
        for i in [0usize, 7, 31] {
            let mut perturbed = data.clone();
            perturbed.y[i] += 100.0;
            let again = estimate_ites(&perturbed, Contrast::T2VsC, &small_cfg(), 5).unwrap();
            let find = |v: &[IteScore]| v.iter().find(|s| s.participant_id == data.ids[i]).unwrap().clone();
            assert_eq!(find(&base), find(&again));
        }
    }

    #[test]
    fn dr_pseudo_mean_is_difference_in_means_with_zero_models() {
        let y = [3.0, 5.0, 4.0, 1.0, 2.0, 6.0];
        let treated = [true, true, false, false, false, true];
        let e = 3.0 / 6.0;
        let mean: f64 = y.iter().zip(&treated).map(|(&v, &t)| dr_pseudo_outcome(v, t, 0.0, 0.0, e)).sum::<f64>() / 6.0;
        let dim = (3.0 + 5.0 + 6.0) / 3.0 - (4.0 + 1.0 + 2.0) / 3.0;
        assert!((mean - dim).abs() < 1e-12);
    }

    #[test]
    fn too_small_arm_is_an_error() {
        let mut data = synthetic(20, |_| 0.0, 0.1, 4);
        for a in data.arms.iter_mut().skip(2) {
            if *a == Arm::T2 {
                *a = Arm::T1;
            }
        }
        assert!(matches!(estimate_ites(&data, Contrast::T2VsC, &small_cfg(), 1), Err(HteError::TooFewInArm { .. })));
    }

    fn profile(id: &str, psych: f64) -> ParticipantProfile {
        ParticipantProfile::new(
            id,
            PsychScores::uniform(psych),
            Sociodemographics { living_budget: psych - 1.0, gender: Gender::Female, bill_experience: true },
            vec![],
        )
    }

    fn score(id: &str, v: f64) -> IteScore {
        IteScore { participant_id: id.into(), contrast: Contrast::T2VsC, s: v, t: v, x: v, dr: v, ensemble: v, units: "kWh".into() }
    }

    #[test]
    fn quartile_tracks_responsiveness() {
        let ids: Vec<String> = (0..12).map(|i| format!("P{i:02}")).collect();
        let profiles: Vec<_> = ids.iter().enumerate().map(|(i, id)| profile(id, 1.0 + i as f64 / 3.0)).collect();
        let scores: Vec<_> = ids.iter().enumerate().map(|(i, id)| score(id, -(i as f64))).collect();
        let q = top_quartile_profile(&scores, &profiles).unwrap();
        assert_eq!((q.n_top, q.n_rest), (3, 9));
        assert!(q.top_mean_psych > q.rest_mean_psych);
        let flat: Vec<_> = ids.iter().map(|id| score(id, 0.0)).collect();
        let q = top_quartile_profile(&flat, &profiles).unwrap();
        assert_eq!(q.top_ids, vec!["P00", "P01", "P02"]);
        assert!(top_quartile_profile(&flat[..7], &profiles).is_err());
    }
}
