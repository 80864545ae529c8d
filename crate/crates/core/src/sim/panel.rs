use super::SimError;
use crate::types::{round_of_day, Arm, Resource, BASELINE_DAYS};
use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    Intervention,
}

/// One person-day observation.
///
/// `missing` is set both for days never reported (`value: None`) and for
/// values invalidated by cleaning, which keep their raw `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub participant_id: String,
    pub arm: Arm,
    pub cluster_id: u32,
    pub day: u32,
    /// 0 during baseline.
    pub round: u32,
    pub resource: Resource,
    pub value: Option<f64>,
    pub missing: bool,
}

impl PanelRow {
    pub fn phase(&self) -> Phase {
        if self.day < BASELINE_DAYS {
            Phase::Baseline
        } else {
            Phase::Intervention
        }
    }

    /// Value usable for analysis.
    pub fn valid(&self) -> Option<f64> {
        if self.missing {
            None
        } else {
            self.value
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Open,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub participant_id: String,
    pub round: u32,
    pub kind: EventKind,
    /// Hours between the round's report and the event.
    pub hours_after_send: f64,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPanel {
    pub start_date: NaiveDate,
    pub rows: Vec<PanelRow>,
    pub arms: BTreeMap<String, Arm>,
    pub clusters: BTreeMap<String, u32>,
    pub events: Vec<EngagementEvent>,
    /// (participant, resource) pairs dropped from the analytic sample.
    pub excluded: BTreeSet<(String, Resource)>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    participant_id: String,
    arm: String,
    cluster_id: u32,
    date: NaiveDate,
    phase: Phase,
    round: u32,
    resource: Resource,
    value: Option<f64>,
    missing: bool,
}

impl TrialPanel {
    pub fn date_of(&self, day: u32) -> NaiveDate {
        self.start_date.checked_add_days(Days::new(day as u64)).expect("date in range")
    }

    pub fn participants(&self) -> impl Iterator<Item = &String> {
        self.arms.keys()
    }

    pub fn is_excluded(&self, participant: &str, resource: Resource) -> bool {
        self.excluded.contains(&(participant.to_string(), resource))
    }

    /// Rows of one resource, grouped by participant in day order.
    pub fn by_participant(&self, resource: Resource) -> BTreeMap<&str, Vec<&PanelRow>> {
        let mut out: BTreeMap<&str, Vec<&PanelRow>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.resource == resource) {
            out.entry(r.participant_id.as_str()).or_default().push(r);
        }
        for rows in out.values_mut() {
            rows.sort_by_key(|r| r.day);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                participant_id: r.participant_id.clone(),
                arm: r.arm.to_string(),
                cluster_id: r.cluster_id,
                date: self.date_of(r.day),
                phase: r.phase(),
                round: r.round,
                resource: r.resource,
                value: r.value,
                missing: r.missing,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a panel; the first date in the file is taken as study day 0
    /// unless `start_date` is given.
    pub fn read_csv<R: Read>(input: R, start_date: Option<NaiveDate>) -> Result<TrialPanel, SimError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut raw = Vec::new();
        for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            raw.push((i + 2, rec?));
        }
        let start = match start_date.or_else(|| raw.iter().map(|(_, r)| r.date).min()) {
            Some(d) => d,
            None => NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid"),
        };
        let mut panel = TrialPanel {
            start_date: start,
            rows: Vec::with_capacity(raw.len()),
            arms: BTreeMap::new(),
            clusters: BTreeMap::new(),
            events: Vec::new(),
            excluded: BTreeSet::new(),
        };
        for (line, r) in raw {
            let err = |message: String| SimError::Parse { line, message };
            let arm: Arm = r.arm.parse().map_err(err)?;
            let day = (r.date - start).num_days();
            let day = u32::try_from(day).map_err(|_| err(format!("date {} before study start", r.date)))?;
            let round = round_of_day(day).unwrap_or(0);
            if round != r.round {
                return Err(err(format!("round {} inconsistent with date {}", r.round, r.date)));
            }
            if r.value.is_none() && !r.missing {
                return Err(err("empty value must be flagged missing".into()));
            }
            if let Some(prev) = panel.arms.insert(r.participant_id.clone(), arm) {
                if prev != arm {
                    return Err(err(format!("participant {} in two arms", r.participant_id)));
                }
            }
            panel.clusters.insert(r.participant_id.clone(), r.cluster_id);
            panel.rows.push(PanelRow {
                participant_id: r.participant_id,
                arm,
                cluster_id: r.cluster_id,
                day,
                round,
                resource: r.resource,
                value: r.value,
                missing: r.missing,
            });
        }
        Ok(panel)
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.events {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EngagementEvent>, SimError> {
        let mut rdr = csv::Reader::from_reader(input);
        rdr.deserialize().map(|r| r.map_err(SimError::from)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let row = |day, value: Option<f64>, missing| PanelRow {
            participant_id: "P001".into(),
            arm: Arm::T1,
            cluster_id: 4,
            day,
            round: round_of_day(day).unwrap_or(0),
            resource: Resource::HotWater,
            value,
            missing,
        };
        let panel = TrialPanel {
            start_date: NaiveDate::from_ymd_opt(2024, 10, 14).unwrap(),
            rows: vec![row(0, Some(35.123456789), false), row(30, None, true), row(31, Some(400.0), true)],
            arms: [("P001".to_string(), Arm::T1)].into(),
            clusters: [("P001".to_string(), 4)].into(),
            events: vec![],
            excluded: BTreeSet::new(),
        };
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("participant_id,arm,cluster_id,date,phase,round,resource,value,missing\n"));
        assert!(text.contains("P001,T1,4,2024-11-13,intervention,1,hot_water,,true"));
        let back = TrialPanel::read_csv(&buf[..], Some(panel.start_date)).unwrap();
        assert_eq!(back, panel);
    }
}
