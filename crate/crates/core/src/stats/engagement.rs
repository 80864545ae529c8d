use crate::sim::{EngagementEvent, EventKind};
use crate::types::{Arm, ROUNDS};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// A reply counts as timely when it arrives within this many hours of the send.
pub const REPLY_WINDOW_HOURS: f64 = 48.0;

/// Participants with at least one report open and at least one reply.
pub fn engaged_participants(events: &[EngagementEvent]) -> BTreeSet<String> {
    let mut opened = BTreeSet::new();
    let mut replied = BTreeSet::new();
    for e in events {
        match e.kind {
            EventKind::Open => opened.insert(e.participant_id.as_str()),
            EventKind::Reply => replied.insert(e.participant_id.as_str()),
        };
    }
    opened.intersection(&replied).map(|s| s.to_string()).collect()
}

/// Engaged share per arm, indexed by `Arm::index`. Empty arms give 0.
pub fn engagement_rate(events: &[EngagementEvent], arms: &BTreeMap<String, Arm>) -> [f64; 3] {
    let engaged = engaged_participants(events);
    let mut size = [0usize; 3];
    let mut hit = [0usize; 3];
    for (pid, arm) in arms {
        size[arm.index()] += 1;
        if engaged.contains(pid) {
            hit[arm.index()] += 1;
        }
    }
    std::array::from_fn(|i| if size[i] == 0 { 0.0 } else { hit[i] as f64 / size[i] as f64 })
}

/// First round without a timely reply, or `None` if every round had one.
pub fn first_missed_round(events: &[EngagementEvent], participant: &str) -> Option<u32> {
    let timely: BTreeSet<u32> = events
        .iter()
        .filter(|e| e.participant_id == participant && e.kind == EventKind::Reply)
        .filter(|e| e.hours_after_send <= REPLY_WINDOW_HOURS)
        .map(|e| e.round)
        .collect();
    (1..=ROUNDS).find(|r| !timely.contains(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<u32>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    /// S(t) as a step function; 1 before the first time point.
    pub fn at(&self, t: u32) -> f64 {
        self.times
            .iter()
            .zip(&self.survival)
            .take_while(|(&ti, _)| ti <= t)
            .last()
            .map_or(1.0, |(_, &s)| s)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Product-limit estimate over rounds 1..=5 from `(time, event)` pairs.
/// Censored observations stay at risk through their time.
pub fn km_curve(durations: &[(u32, bool)]) -> SurvivalCurve {
    let mut curve = SurvivalCurve { times: Vec::new(), at_risk: Vec::new(), events: Vec::new(), survival: Vec::new() };
    // Exact rational product, so S(t) is the correctly rounded fraction.
    let (mut num, mut den) = (1u128, 1u128);
    for t in 1..=ROUNDS {
        let n = durations.iter().filter(|(ti, _)| *ti >= t).count();
        let d = durations.iter().filter(|(ti, e)| *ti == t && *e).count();
        if n > 0 {
            num *= (n - d) as u128;
            den *= n as u128;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        curve.times.push(t);
        curve.at_risk.push(n);
        curve.events.push(d);
        curve.survival.push(num as f64 / den as f64);
    }
    curve
}

/// Time to first missed reply window per arm; non-missers censored at the last round.
pub fn km_survival(events: &[EngagementEvent], arms: &BTreeMap<String, Arm>) -> BTreeMap<Arm, SurvivalCurve> {
    let mut durations: BTreeMap<Arm, Vec<(u32, bool)>> = Arm::ALL.iter().map(|&a| (a, Vec::new())).collect();
    for (pid, arm) in arms {
        let d = match first_missed_round(events, pid) {
            Some(r) => (r, true),
            None => (ROUNDS, false),
        };
        durations.get_mut(arm).expect("all arms").push(d);
    }
    durations.into_iter().map(|(a, d)| (a, km_curve(&d))).collect()
}
