use super::{SimConfig, SimError};
use crate::profile::{Gender, ParticipantProfile, PsychScores, Sociodemographics, UsageParameters, PSYCH_MAX, PSYCH_MIN};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

/// Participants enrolled together through self-reported ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentCluster {
    pub cluster_id: u32,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub profiles: Vec<ParticipantProfile>,
    pub clusters: Vec<AssignmentCluster>,
}

const APPLIANCES: [(&str, f64); 10] = [
    ("air conditioner", 0.85),
    ("desk lamp", 0.8),
    ("laptop", 0.9),
    ("desktop computer", 0.25),
    ("monitor", 0.3),
    ("electric kettle", 0.45),
    ("hair dryer", 0.55),
    ("phone charger", 0.95),
    ("space heater", 0.15),
    ("electric fan", 0.35),
];

pub fn participant_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("P{:0width$}", i + 1)
}

/// Cluster sizes for `n` people, scaled from the reference counts.
pub fn cluster_sizes(n: usize, reference: &[usize]) -> Vec<usize> {
    let ref_total: usize = reference.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
    let mut sizes = Vec::new();
    let mut placed = 0;
    for (i, &count) in reference.iter().enumerate().skip(1).rev() {
        let size = i + 1;
        let k = n * count / ref_total;
        for _ in 0..k {
            if placed + size <= n {
                sizes.push(size);
                placed += size;
            }
        }
    }
    sizes.extend(std::iter::repeat_n(1, n - placed));
    sizes
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let dist = Normal::new(mean, sd).expect("finite sd");
    loop {
        let x = dist.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
}

/// Draw `n` participant profiles and their assignment clusters.
pub fn synth_population(cfg: &SimConfig, seed: u64) -> Result<Population, SimError> {
    cfg.validate()?;
    let n = cfg.n;
    let mut profiles = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream_indexed(seed, "population/profile", i as u64);
        let common = Normal::new(0.0, 0.45).expect("valid").sample(&mut r);
        let mut psych = [0.0; 5];
        for p in psych.iter_mut() {
            *p = truncated_normal(&mut r, 3.5 + common, 0.45, PSYCH_MIN, PSYCH_MAX);
        }
        let budget = LogNormal::new(1.9f64.ln(), 0.35).expect("valid").sample(&mut r);
        let gender = match r.random::<f64>() {
            u if u < 0.49 => Gender::Female,
            u if u < 0.98 => Gender::Male,
            _ => Gender::Other,
        };
        let socio = Sociodemographics { living_budget: budget, gender, bill_experience: r.random_bool(0.4) };
        let mut inventory: Vec<String> =
            APPLIANCES.iter().filter(|(_, p)| r.random_bool(*p)).map(|(a, _)| a.to_string()).collect();
        if inventory.is_empty() {
            inventory.push("desk lamp".into());
        }
        let mut profile = ParticipantProfile::new(participant_id(i, n), PsychScores::from_array(psych), socio, inventory);
        profile.usage = UsageParameters {
            shower_flow_lpm: truncated_normal(&mut r, 8.0, 1.5, 5.0, 12.0),
            showers_per_week: r.random_range(4..=7) as f64,
            shower_minutes: truncated_normal(&mut r, 11.0, 3.0, 5.0, 20.0),
        };
        profiles.push(profile);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "population/clusters"));
    let mut clusters = Vec::new();
    let mut next = 0;
    for (cid, size) in cluster_sizes(n, &cfg.cluster_counts).into_iter().enumerate() {
        let mut members: Vec<String> = order[next..next + size].iter().map(|&i| participant_id(i, n)).collect();
        members.sort();
        clusters.push(AssignmentCluster { cluster_id: cid as u32 + 1, members });
        next += size;
    }
    Ok(Population { profiles, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sizes_reproduced_at_233() {
        let sizes = cluster_sizes(233, &[180, 17, 5, 1]);
        let count = |s| sizes.iter().filter(|&&x| x == s).count();
        assert_eq!((count(1), count(2), count(3), count(4)), (180, 17, 5, 1));
        assert_eq!(sizes.len(), 203);
        assert_eq!(sizes.iter().sum::<usize>(), 233);
    }

    #[test]
    fn three_people_are_three_singletons() {
        let cfg = SimConfig { n: 3, ..SimConfig::default() };
        let pop = synth_population(&cfg, 1).unwrap();
        assert_eq!(pop.clusters.len(), 3);
        assert!(pop.clusters.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn too_small_population_rejected() {
        let cfg = SimConfig { n: 2, ..SimConfig::default() };
        assert!(matches!(synth_population(&cfg, 1), Err(SimError::PopulationTooSmall(2))));
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = SimConfig::default();
        let a = synth_population(&cfg, 9).unwrap();
        assert_eq!(a, synth_population(&cfg, 9).unwrap());
        assert!(a.profiles.iter().all(|p| p.validate().is_ok()));
        let mut all: Vec<&String> = a.clusters.iter().flat_map(|c| &c.members).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 233);
    }
}
