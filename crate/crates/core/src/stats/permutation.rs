use super::StatsError;
use crate::rng;
use crate::types::Arm;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub p: f64,
    pub replicates: usize,
    /// Replicates with |stat| ≥ |observed|.
    pub exceed: usize,
    /// Set when the statistic was NaN or did not vary; p is then 1.
    pub degenerate: bool,
}

/// Randomization test over arm labels.
///
/// Labels are reassigned among whole clusters of equal size, which keeps both
/// the arm sizes and the cluster structure of the observed assignment. Each
/// replicate draws from its own seeded stream, so results do not depend on
/// thread scheduling.
pub fn permutation_test<F>(
    labels: &[Arm],
    clusters: &[u32],
    statistic: F,
    replicates: usize,
    seed: u64,
) -> Result<PermutationResult, StatsError>
where
    F: Fn(&[Arm]) -> f64 + Sync,
{
    if replicates == 0 {
        return Err(StatsError::Empty("need at least one replicate".into()));
    }
    if labels.len() != clusters.len() {
        return Err(StatsError::Dimension(format!("{} labels vs {} cluster keys", labels.len(), clusters.len())));
    }
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in clusters.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    // Strata of same-size clusters; each entry lists (cluster members, label).
    let mut strata: BTreeMap<usize, Vec<(&Vec<usize>, Arm)>> = BTreeMap::new();
    for m in members.values() {
        strata.entry(m.len()).or_default().push((m, labels[m[0]]));
    }

    let observed = statistic(labels);
    let permuted: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream_indexed(seed, "permutation", b as u64);
            let mut out = labels.to_vec();
            for group in strata.values() {
                let mut arms: Vec<Arm> = group.iter().map(|(_, a)| *a).collect();
                arms.shuffle(&mut r);
                for ((m, _), a) in group.iter().zip(arms) {
                    for &i in m.iter() {
                        out[i] = a;
                    }
                }
            }
            statistic(&out)
        })
        .collect();

    let constant = permuted.iter().all(|&s| s == observed);
    if observed.is_nan() || permuted.iter().any(|s| s.is_nan()) || (constant && replicates > 1) {
        log::warn!("permutation statistic is degenerate (NaN or constant); reporting p = 1");
        return Ok(PermutationResult { observed, p: 1.0, replicates, exceed: replicates, degenerate: true });
    }
    let exceed = permuted.iter().filter(|s| s.abs() >= observed.abs()).count();
    Ok(PermutationResult {
        observed,
        p: (1 + exceed) as f64 / (replicates + 1) as f64,
        replicates,
        exceed,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_diff(y: &[f64]) -> impl Fn(&[Arm]) -> f64 + Sync + '_ {
        move |lab: &[Arm]| {
            let m = |a: Arm| {
                let v: Vec<f64> = y.iter().zip(lab).filter(|(_, &l)| l == a).map(|(y, _)| *y).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            m(Arm::T2) - m(Arm::C)
        }
    }

    #[test]
    fn perfect_separation_hits_floor() {
        let labels: Vec<Arm> = (0..30).map(|i| Arm::ALL[i % 3]).collect();
        let y: Vec<f64> = labels.iter().map(|a| a.index() as f64).collect();
        let clusters: Vec<u32> = (0..30).collect();
        let b = 999;
        let r = permutation_test(&labels, &clusters, mean_diff(&y), b, 7).unwrap();
        assert!(r.p <= 3.0 / (b as f64 + 1.0), "p = {}", r.p);
    }

    #[test]
    fn single_replicate_p_values() {
        let labels: Vec<Arm> = (0..9).map(|i| Arm::ALL[i % 3]).collect();
        let y: Vec<f64> = (0..9).map(|i| (i * 7 % 5) as f64).collect();
        let clusters: Vec<u32> = (0..9).collect();
        for seed in 0..20 {
            let r = permutation_test(&labels, &clusters, mean_diff(&y), 1, seed).unwrap();
            assert!(r.p == 0.5 || r.p == 1.0);
        }
    }

    #[test]
    fn constant_statistic_is_degenerate() {
        let labels = vec![Arm::C, Arm::T1, Arm::T2, Arm::C];
        let r = permutation_test(&labels, &[0, 1, 2, 3], |_| 1.0, 50, 1).unwrap();
        assert!(r.degenerate && r.p == 1.0);
    }

    #[test]
    fn clusters_move_together_and_sizes_hold() {
        let labels = vec![Arm::C, Arm::C, Arm::T1, Arm::T2, Arm::T2, Arm::T1];
        let clusters = vec![0, 0, 1, 2, 2, 3];
        let check = |lab: &[Arm]| {
            assert_eq!(lab[0], lab[1]);
            assert_eq!(lab[3], lab[4]);
            let count = |a| lab.iter().filter(|&&l| l == a).count();
            assert_eq!((count(Arm::C), count(Arm::T1), count(Arm::T2)), (2, 2, 2));
            lab[0].index() as f64
        };
        permutation_test(&labels, &clusters, check, 200, 3).unwrap();
    }
}
