use super::{AssignmentCluster, SimError};
use crate::rng;
use crate::types::Arm;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// Arm of every cluster and participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub by_cluster: BTreeMap<u32, Arm>,
    pub by_participant: BTreeMap<String, Arm>,
    pub cluster_of: BTreeMap<String, u32>,
}

impl Assignment {
    pub fn arm_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for arm in self.by_participant.values() {
            sizes[arm.index()] += 1;
        }
        sizes
    }

    pub fn arm(&self, participant: &str) -> Option<Arm> {
        self.by_participant.get(participant).copied()
    }

    /// Randomization share of each arm.
    pub fn shares(&self) -> [f64; 3] {
        let n = self.by_participant.len().max(1) as f64;
        self.arm_sizes().map(|s| s as f64 / n)
    }
}

/// Cluster-preserving balanced randomization.
///
/// Clusters are shuffled, stably sorted by decreasing size, and each is
/// placed in the currently smallest arm (random choice among ties).
pub fn randomize(clusters: &[AssignmentCluster], seed: u64) -> Result<Assignment, SimError> {
    let arms = Arm::ALL.len();
    if clusters.len() < arms {
        return Err(SimError::TooFewClusters { clusters: clusters.len(), arms });
    }
    let mut r = rng::stream(seed, "randomize");
    let mut order: Vec<&AssignmentCluster> = clusters.iter().collect();
    order.shuffle(&mut r);
    order.sort_by(|a, b| b.members.len().cmp(&a.members.len()));

    let mut sizes = [0usize; 3];
    let mut a = Assignment { by_cluster: BTreeMap::new(), by_participant: BTreeMap::new(), cluster_of: BTreeMap::new() };
    for c in order {
        let min = *sizes.iter().min().expect("three arms");
        let ties: Vec<usize> = (0..arms).filter(|&i| sizes[i] == min).collect();
        let pick = ties[r.random_range(0..ties.len())];
        let arm = Arm::ALL[pick];
        sizes[pick] += c.members.len();
        a.by_cluster.insert(c.cluster_id, arm);
        for m in &c.members {
            a.by_participant.insert(m.clone(), arm);
            a.cluster_of.insert(m.clone(), c.cluster_id);
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synth_population, SimConfig};

    fn singles(k: u32) -> Vec<AssignmentCluster> {
        (1..=k).map(|i| AssignmentCluster { cluster_id: i, members: vec![format!("P{i}")] }).collect()
    }

    #[test]
    fn three_singletons_one_per_arm() {
        let a = randomize(&singles(3), 4).unwrap();
        assert_eq!(a.arm_sizes(), [1, 1, 1]);
    }

    #[test]
    fn pair_shares_an_arm() {
        let mut cs = singles(3);
        cs.push(AssignmentCluster { cluster_id: 9, members: vec!["A".into(), "B".into()] });
        let a = randomize(&cs, 2).unwrap();
        assert_eq!(a.arm("A"), a.arm("B"));
    }

    #[test]
    fn too_few_clusters() {
        assert!(matches!(randomize(&singles(2), 0), Err(SimError::TooFewClusters { .. })));
    }

    #[test]
    fn default_cluster_sizes_balanced_over_seeds() {
        let pop = synth_population(&SimConfig::default(), 1).unwrap();
        for seed in 0..100 {
            let sizes = randomize(&pop.clusters, seed).unwrap().arm_sizes();
            let mut sorted = sizes;
            sorted.sort();
            for (got, want) in sorted.iter().zip([77, 78, 78]) {
                assert!((*got as i64 - want).abs() <= 3, "seed {seed}: {sizes:?}");
            }
        }
    }
}
