//! Boosted-tree importance of consumption drivers, whole-period and by phase,
//! plus a cross-validated comparison of candidate learners.

use crate::hte::FEATURE_NAMES as BASE_FEATURES;
use crate::rng;
use crate::sim::{EngagementEvent, EventKind};
use crate::stats::{fit_ols, Covariance, Design, Unit};
use crate::trees::{fit_boost, fit_forest, fit_tree, BoostParams, ForestParams, Matrix, TreeError, TreeParams};
use crate::types::Arm;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("too few rows ({0}) for the analysis")]
    TooFew(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    BaselineConsumption,
    Psychological,
    SocioStructural,
    InterventionRelated,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 4] = [
        FeatureCategory::BaselineConsumption,
        FeatureCategory::Psychological,
        FeatureCategory::SocioStructural,
        FeatureCategory::InterventionRelated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureCategory::BaselineConsumption => "baseline_consumption",
            FeatureCategory::Psychological => "psychological",
            FeatureCategory::SocioStructural => "socio_structural",
            FeatureCategory::InterventionRelated => "intervention_related",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Whole,
    Early,
    Late,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Whole => "whole",
            Phase::Early => "early",
            Phase::Late => "late",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub name: String,
    pub category: FeatureCategory,
}

/// Feature matrix with per-phase outcomes (`None` where a phase is unobserved).
#[derive(Debug, Clone)]
pub struct PredictorData {
    pub ids: Vec<String>,
    pub features: Vec<Feature>,
    pub x: Matrix,
    pub outcomes: BTreeMap<Phase, Vec<Option<f64>>>,
}

fn category_of(name: &str) -> FeatureCategory {
    match name {
        "baseline" => FeatureCategory::BaselineConsumption,
        "living_budget" | "female" | "bill_experience" => FeatureCategory::SocioStructural,
        n if BASE_FEATURES[1..6].contains(&n) => FeatureCategory::Psychological,
        _ => FeatureCategory::InterventionRelated,
    }
}

fn mean(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl PredictorData {
    /// Baseline, psychological and socio-structural features plus nudge type,
    /// reply count and mean reply length. Phase outcomes are per-phase means:
    /// early = rounds 1-2, late = round 5.
    pub fn from_units(units: &[Unit], events: &[EngagementEvent]) -> Self {
        let mut replies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Reply) {
            let r = replies.entry(e.participant_id.as_str()).or_default();
            r.0 += 1;
            r.1 += e.text.chars().count();
        }
        let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        names.extend(["nudge_t1", "nudge_t2", "chat_frequency", "avg_chat_length"].map(String::from));
        let rows: Vec<Vec<f64>> = units
            .iter()
            .map(|u| {
                let c = &u.covariates;
                let (n, len) = replies.get(u.participant_id.as_str()).copied().unwrap_or((0, 0));
                let mut r = vec![u.baseline];
                r.extend_from_slice(&c.psych);
                r.extend([c.living_budget, c.female, c.bill_experience]);
                r.extend([
                    f64::from(u.arm == Arm::T1),
                    f64::from(u.arm == Arm::T2),
                    n as f64,
                    if n > 0 { len as f64 / n as f64 } else { 0.0 },
                ]);
                r
            })
            .collect();
        let outcomes = BTreeMap::from([
            (Phase::Whole, units.iter().map(|u| Some(u.outcome)).collect()),
            (Phase::Early, units.iter().map(|u| mean(&u.round_means[0..2])).collect()),
            (Phase::Late, units.iter().map(|u| u.round_means[4]).collect()),
        ]);
        PredictorData {
            ids: units.iter().map(|u| u.participant_id.clone()).collect(),
            features: names.iter().map(|n| Feature { name: n.clone(), category: category_of(n) }).collect(),
            x: Matrix::from_rows(&rows).expect("fixed width"),
            outcomes,
        }
    }

    /// Rows with an observed outcome in `phase`.
    pub fn phase_rows(&self, phase: Phase) -> (Matrix, Vec<f64>) {
        let ys = &self.outcomes[&phase];
        let idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i].is_some()).collect();
        (self.x.select(&idx), idx.iter().map(|&i| ys[i].expect("filtered")).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub category: FeatureCategory,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    pub phase: Phase,
    pub features: Vec<FeatureImportance>,
    /// Sums of member-feature importances, in `FeatureCategory::ALL` order.
    pub categories: [f64; 4],
    pub zero_gain: bool,
}

impl ImportanceProfile {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.importance)
    }

    pub fn category(&self, c: FeatureCategory) -> f64 {
        self.categories[FeatureCategory::ALL.iter().position(|&x| x == c).expect("listed")]
    }
}

pub fn fit_importance(
    x: &Matrix,
    features: &[Feature],
    y: &[f64],
    phase: Phase,
    params: &BoostParams,
) -> Result<ImportanceProfile, PredictorError> {
    if x.ncols() != features.len() {
        return Err(PredictorError::Dimension(format!("{} columns for {} features", x.ncols(), features.len())));
    }
    // Fit on columns sorted by name so that split ties resolve the same way
    // whatever order the caller supplied.
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[a].name.cmp(&features[b].name));
    let cols: Vec<Vec<f64>> = order.iter().map(|&j| (0..x.nrows()).map(|i| x.get(i, j)).collect()).collect();
    let model = fit_boost(&Matrix::from_columns(&cols)?, y, params)?;
    let imp = model.importance();
    let mut values = vec![0.0; features.len()];
    for (k, &j) in order.iter().enumerate() {
        values[j] = imp.values[k];
    }
    let mut categories = [0.0; 4];
    let features: Vec<FeatureImportance> = features
        .iter()
        .zip(&values)
        .map(|(f, &v)| {
            categories[FeatureCategory::ALL.iter().position(|&c| c == f.category).expect("listed")] += v;
            FeatureImportance { name: f.name.clone(), category: f.category, importance: v }
        })
        .collect();
    Ok(ImportanceProfile { phase, features, categories, zero_gain: imp.zero_gain })
}

/// Early and late profiles with identical features and hyperparameters.
pub fn phase_comparison(data: &PredictorData, params: &BoostParams) -> Result<(ImportanceProfile, ImportanceProfile), PredictorError> {
    let fit = |phase| {
        let (x, y) = data.phase_rows(phase);
        if y.len() < 2 {
            return Err(PredictorError::TooFew(y.len()));
        }
        fit_importance(&x, &data.features, &y, phase, params)
    };
    Ok((fit(Phase::Early)?, fit(Phase::Late)?))
}

/// Rows of (outcome label, profile), e.g. one per resource and phase.
pub fn write_importance_csv<W: Write>(profiles: &[(String, ImportanceProfile)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outcome", "feature", "category", "phase", "importance"])?;
    for (label, p) in profiles {
        for f in &p.features {
            w.write_record([label, &f.name, f.category.as_str(), p.phase.as_str(), &format!("{:.6}", f.importance)])?;
        }
        for (c, v) in FeatureCategory::ALL.iter().zip(p.categories) {
            w.write_record([label, &format!("category:{}", c.as_str()), c.as_str(), p.phase.as_str(), &format!("{v:.6}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerScore {
    pub learner: String,
    /// Cross-validated RMSE; `None` when the learner could not be fit.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub scores: Vec<LearnerScore>,
    pub winner: String,
}

/// K-fold CV RMSE for least squares, a single tree, a forest and boosting.
pub fn model_selection(x: &Matrix, y: &[f64], folds: usize, forest_trees: usize, seed: u64) -> Result<ModelSelection, PredictorError> {
    let n = y.len();
    if n < 2 * folds.max(2) {
        return Err(PredictorError::TooFew(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "predictors/cv"));
    let mut fold_of = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold_of[i] = k % folds;
    }
    type Learner<'a> = Box<dyn Fn(&Matrix, &[f64], &Matrix) -> Option<Vec<f64>> + 'a>;
    let learners: Vec<(&str, Learner)> = vec![
        (
            "least_squares",
            Box::new(|xt: &Matrix, yt: &[f64], xv: &Matrix| {
                let p = xt.ncols();
                let mut names = vec!["intercept".to_string()];
                names.extend((0..p).map(|j| format!("x{j}")));
                let mut cols = vec![vec![1.0; xt.nrows()]];
                cols.extend((0..p).map(|j| (0..xt.nrows()).map(|i| xt.get(i, j)).collect()));
                let m = fit_ols(&Design::from_columns(names, &cols).ok()?, yt, &Covariance::Iid).ok()?;
                Some((0..xv.nrows()).map(|i| m.coef[0] + (0..p).map(|j| m.coef[j + 1] * xv.get(i, j)).sum::<f64>()).collect())
            }),
        ),
        (
            "tree",
            Box::new(|xt: &Matrix, yt: &[f64], xv: &Matrix| {
                Some(fit_tree(xt, yt, &TreeParams { max_depth: Some(6), ..Default::default() }, seed).ok()?.predict(xv))
            }),
        ),
        (
            "forest",
            Box::new(|xt: &Matrix, yt: &[f64], xv: &Matrix| {
                Some(fit_forest(xt, yt, &ForestParams::with_trees(forest_trees), seed).ok()?.predict(xv))
            }),
        ),
        (
            "boost",
            Box::new(|xt: &Matrix, yt: &[f64], xv: &Matrix| Some(fit_boost(xt, yt, &BoostParams::default()).ok()?.predict(xv))),
        ),
    ];
    let mut scores = Vec::new();
    for (name, fit) in &learners {
        let mut sse = 0.0;
        let mut ok = true;
        for f in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            match fit(&x.select(&train), &yt, &x.select(&test)) {
                Some(pred) => sse += test.iter().zip(pred).map(|(&i, p)| (y[i] - p).powi(2)).sum::<f64>(),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        scores.push(LearnerScore { learner: name.to_string(), rmse: ok.then(|| (sse / n as f64).sqrt()) });
    }
    let winner = scores
        .iter()
        .filter_map(|s| s.rmse.map(|r| (r, s.learner.clone())))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l)| l)
        .unwrap_or_default();
    Ok(ModelSelection { scores, winner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn features(n: usize) -> Vec<Feature> {
        let mut f = vec![Feature { name: "baseline".into(), category: FeatureCategory::BaselineConsumption }];
        for j in 1..n {
            f.push(Feature { name: format!("psych{j}"), category: FeatureCategory::Psychological });
        }
        f
    }

    fn random_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, "rows");
        (0..n).map(|_| (0..p).map(|_| r.random_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn outcome_equal_to_baseline_loads_on_baseline() {
        let rows = random_rows(150, 4, 1);
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let p = fit_importance(&Matrix::from_rows(&rows).unwrap(), &features(4), &y, Phase::Whole, &BoostParams::default()).unwrap();
        assert!(p.get("baseline").unwrap() > 0.95);
        let member_sum: f64 = p.features.iter().filter(|f| f.category == FeatureCategory::Psychological).map(|f| f.importance).sum();
        assert_eq!(p.category(FeatureCategory::Psychological), member_sum);
        assert!((p.categories.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn column_order_does_not_matter() {
        let rows = random_rows(120, 3, 2);
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.5 * r[2]).collect();
        let f = features(3);
        let a = fit_importance(&Matrix::from_rows(&rows).unwrap(), &f, &y, Phase::Whole, &BoostParams::default()).unwrap();
        let rev_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        let rev_f: Vec<Feature> = f.iter().rev().cloned().collect();
        let b = fit_importance(&Matrix::from_rows(&rev_rows).unwrap(), &rev_f, &y, Phase::Whole, &BoostParams::default()).unwrap();
        for fi in &a.features {
            assert!((fi.importance - b.get(&fi.name).unwrap()).abs() < 1e-9, "{} {} {}", fi.name, fi.importance, b.get(&fi.name).unwrap());
        }
    }

    #[test]
    fn constant_outcome_is_zero_flagged() {
        let rows = random_rows(20, 2, 3);
        let p = fit_importance(&Matrix::from_rows(&rows).unwrap(), &features(2), &[1.0; 20], Phase::Late, &BoostParams::default()).unwrap();
        assert!(p.zero_gain);
        assert_eq!(p.categories, [0.0; 4]);
    }

    #[test]
    fn cv_prefers_flexible_learner_on_step_function() {
        let rows = random_rows(120, 2, 4);
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 0.5 { 3.0 } else { 0.0 } + 0.05 * r[1]).collect();
        let sel = model_selection(&Matrix::from_rows(&rows).unwrap(), &y, 5, 30, 1).unwrap();
        assert_eq!(sel.scores.len(), 4);
        assert_ne!(sel.winner, "least_squares");
    }
}
