use super::TrialPanel;
use crate::types::{Arm, Resource, INTERVENTION_DAYS};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanRules {
    /// Values above Q3 + k * IQR (per resource) are invalidated.
    pub iqr_k: f64,
    /// Participants missing more than this share of intervention days are
    /// excluded from that resource.
    pub max_missing_fraction: f64,
}

impl Default for CleanRules {
    fn default() -> Self {
        CleanRules { iqr_k: 3.0, max_missing_fraction: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceExclusions {
    pub resource: Resource,
    pub upper_bound: f64,
    pub outliers_flagged: usize,
    pub excluded_by_arm: [usize; 3],
    pub retained_by_arm: [usize; 3],
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub rules: CleanRules,
    pub resources: Vec<ResourceExclusions>,
}

impl ExclusionReport {
    pub fn get(&self, resource: Resource) -> Option<&ResourceExclusions> {
        self.resources.iter().find(|r| r.resource == resource)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "exclusions (outlier rule: value > Q3 + {} x IQR; missing rule: > {:.0}% of {} intervention days)\n",
            self.rules.iqr_k,
            self.rules.max_missing_fraction * 100.0,
            INTERVENTION_DAYS
        );
        for r in &self.resources {
            s.push_str(&format!(
                "  {:<12} outliers {:>4} (bound {:.3}); excluded C/T1/T2 = {}/{}/{}; retained = {}/{}/{}\n",
                r.resource.as_str(),
                r.outliers_flagged,
                r.upper_bound,
                r.excluded_by_arm[0],
                r.excluded_by_arm[1],
                r.excluded_by_arm[2],
                r.retained_by_arm[0],
                r.retained_by_arm[1],
                r.retained_by_arm[2],
            ));
        }
        s
    }
}

/// First and third quartiles by linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some((q(0.25), q(0.75)))
}

/// Invalidate extreme values and exclude sparse participants.
///
/// Quartiles are taken over every recorded value, including ones already
/// invalidated, so cleaning a cleaned panel changes nothing.
pub fn clean_panel(panel: &TrialPanel, rules: &CleanRules) -> (TrialPanel, ExclusionReport) {
    let mut out = panel.clone();
    let mut report = ExclusionReport { rules: *rules, resources: Vec::new() };
    out.excluded = BTreeSet::new();
    for resource in Resource::ALL {
        let recorded: Vec<f64> =
            out.rows.iter().filter(|r| r.resource == resource).filter_map(|r| r.value).collect();
        let upper = match quartiles(&recorded) {
            Some((q1, q3)) => q3 + rules.iqr_k * (q3 - q1),
            None => f64::INFINITY,
        };
        let mut flagged = 0;
        for row in out.rows.iter_mut().filter(|r| r.resource == resource) {
            if row.value.is_some_and(|v| v > upper) {
                row.missing = true;
                flagged += 1;
            }
        }
        let mut observed: BTreeMap<&str, usize> = BTreeMap::new();
        for row in out.rows.iter().filter(|r| r.resource == resource && r.round > 0) {
            let entry = observed.entry(row.participant_id.as_str()).or_default();
            if row.valid().is_some() {
                *entry += 1;
            }
        }
        let limit = rules.max_missing_fraction * INTERVENTION_DAYS as f64;
        let mut ex = ResourceExclusions {
            resource,
            upper_bound: upper,
            outliers_flagged: flagged,
            excluded_by_arm: [0; 3],
            retained_by_arm: [0; 3],
            excluded: Vec::new(),
        };
        for (pid, arm) in &panel.arms {
            let seen = observed.get(pid.as_str()).copied().unwrap_or(0);
            let missing = INTERVENTION_DAYS as usize - seen.min(INTERVENTION_DAYS as usize);
            if missing as f64 > limit + 1e-9 {
                ex.excluded_by_arm[arm.index()] += 1;
                ex.excluded.push(pid.clone());
            } else {
                ex.retained_by_arm[arm.index()] += 1;
            }
        }
        for pid in &ex.excluded {
            out.excluded.insert((pid.clone(), resource));
        }
        report.resources.push(ex);
    }
    (out, report)
}

/// Exclusion rate per arm for one resource.
pub fn exclusion_rates(report: &ResourceExclusions) -> [f64; 3] {
    let mut r = [0.0; 3];
    for arm in Arm::ALL {
        let i = arm.index();
        let total = report.excluded_by_arm[i] + report.retained_by_arm[i];
        if total > 0 {
            r[i] = report.excluded_by_arm[i] as f64 / total as f64;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PanelRow;
    use crate::types::{round_of_day, BASELINE_DAYS};
    use chrono::NaiveDate;

    fn panel_with(missing_days: &[(&str, usize)]) -> TrialPanel {
        let mut rows = Vec::new();
        let mut arms = BTreeMap::new();
        for (i, (pid, k)) in missing_days.iter().enumerate() {
            arms.insert(pid.to_string(), Arm::ALL[i % 3]);
            for day in 0..BASELINE_DAYS + INTERVENTION_DAYS {
                let gap = day >= BASELINE_DAYS && ((day - BASELINE_DAYS) as usize) < *k;
                rows.push(PanelRow {
                    participant_id: pid.to_string(),
                    arm: Arm::ALL[i % 3],
                    cluster_id: i as u32,
                    day,
                    round: round_of_day(day).unwrap_or(0),
                    resource: Resource::Electricity,
                    value: (!gap).then_some(3.0 + (day % 5) as f64 * 0.1),
                    missing: gap,
                });
            }
        }
        TrialPanel {
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            clusters: arms.keys().map(|k| (k.clone(), 0)).collect(),
            arms,
            rows,
            events: vec![],
            excluded: BTreeSet::new(),
        }
    }

    #[test]
    fn fourteen_kept_fifteen_excluded() {
        let panel = panel_with(&[("A", 14), ("B", 15), ("C", 0)]);
        let (clean, report) = clean_panel(&panel, &CleanRules::default());
        let ex = report.get(Resource::Electricity).unwrap();
        assert_eq!(ex.excluded, vec!["B".to_string()]);
        assert!(clean.is_excluded("B", Resource::Electricity));
        assert!(!clean.is_excluded("A", Resource::Electricity));
        assert!(!clean.is_excluded("C", Resource::Electricity));
    }

    #[test]
    fn extreme_value_invalidated_participant_kept() {
        let mut panel = panel_with(&[("A", 0), ("B", 0), ("C", 0)]);
        let idx = panel.rows.iter().position(|r| r.participant_id == "A" && r.day == 40).unwrap();
        panel.rows[idx].value = Some(3.2 * 50.0);
        let (clean, report) = clean_panel(&panel, &CleanRules::default());
        assert_eq!(report.get(Resource::Electricity).unwrap().outliers_flagged, 1);
        assert!(clean.rows[idx].missing);
        assert_eq!(clean.rows[idx].value, Some(160.0));
        assert!(!clean.is_excluded("A", Resource::Electricity));
        let again = clean_panel(&clean, &CleanRules::default()).0;
        assert_eq!(again, clean);
    }

    #[test]
    fn quartile_interpolation() {
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]), Some((2.0, 4.0)));
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0]), Some((1.75, 3.25)));
        assert_eq!(quartiles(&[]), None);
    }
}
