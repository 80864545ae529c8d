//! Round-level response trajectories and their clustering into archetypes.

use crate::sim::Archetype;
use crate::stats::Unit;
use crate::types::Arm;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("correlation undefined for a constant vector")]
    ConstantVector,
    #[error("vectors must have equal length of at least two")]
    Length,
    #[error("{have} trajectories cannot form {target} clusters")]
    TooFew { have: usize, target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decrease,
    Increase,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Decrease => "decrease",
            Direction::Increase => "increase",
        }
    }
}

/// Relative change vs baseline for early (rounds 1-2), middle (3-4) and late (5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub participant_id: String,
    pub arm: Arm,
    pub values: [f64; 3],
    pub direction: Direction,
}

pub fn direction_of(values: &[f64; 3]) -> Direction {
    if values.iter().sum::<f64>() > 0.0 {
        Direction::Increase
    } else {
        Direction::Decrease
    }
}

fn mean_of(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `None` when a phase has no observed round or the baseline is not positive.
pub fn trajectory_of(unit: &Unit) -> Option<Trajectory> {
    if !(unit.baseline > 0.0) {
        return None;
    }
    let rm = &unit.round_means;
    let phases = [mean_of(&rm[0..2])?, mean_of(&rm[2..4])?, mean_of(&rm[4..5])?];
    let values = phases.map(|m| (m - unit.baseline) / unit.baseline);
    Some(Trajectory { participant_id: unit.participant_id.clone(), arm: unit.arm, values, direction: direction_of(&values) })
}

/// One minus the Pearson correlation.
pub fn corr_distance(x: &[f64], y: &[f64]) -> Result<f64, ClusterError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(ClusterError::Length);
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(ClusterError::ConstantVector);
    }
    Ok((1.0 - sxy / (sxx * syy).sqrt()).clamp(0.0, 2.0))
}

/// One agglomeration step. Leaves are `0..n`; the merge at step `s` creates cluster `n + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Members of each cluster after the first `n - k` merges, each sorted,
    /// listed by smallest member.
    pub fn cut(&self, k: usize) -> Vec<Vec<usize>> {
        let mut members: BTreeMap<usize, Vec<usize>> = (0..self.n).map(|i| (i, vec![i])).collect();
        for (s, m) in self.merges.iter().take(self.n.saturating_sub(k)).enumerate() {
            let mut joined = members.remove(&m.a).expect("live cluster");
            joined.extend(members.remove(&m.b).expect("live cluster"));
            joined.sort_unstable();
            members.insert(self.n + s, joined);
        }
        let mut out: Vec<Vec<usize>> = members.into_values().collect();
        out.sort();
        out
    }
}

/// Complete-linkage agglomeration under correlation distance.
///
/// Each step merges the pair with the smallest linkage distance; ties go to
/// the lexicographically smallest (id, id) pair.
pub fn complete_linkage(vectors: &[Vec<f64>]) -> Result<Dendrogram, ClusterError> {
    let n = vectors.len();
    let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            dist.insert((i, j), corr_distance(&vectors[i], &vectors[j])?);
        }
    }
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let mut live: Vec<usize> = (0..n).collect();
    let mut size: BTreeMap<usize, usize> = (0..n).map(|i| (i, 1)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    while live.len() > 1 {
        let mut best: Option<((usize, usize), f64)> = None;
        for (x, &a) in live.iter().enumerate() {
            for &b in &live[x + 1..] {
                let d = dist[&key(a, b)];
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((key(a, b), d));
                }
            }
        }
        let ((a, b), d) = best.expect("two live clusters");
        let new = n + merges.len();
        for &c in live.iter().filter(|&&c| c != a && c != b) {
            let dc = dist[&key(a, c)].max(dist[&key(b, c)]);
            dist.insert(key(new, c), dc);
        }
        live.retain(|&c| c != a && c != b);
        live.push(new);
        let s = size[&a] + size[&b];
        size.insert(new, s);
        merges.push(Merge { a, b, distance: d, size: s });
    }
    Ok(Dendrogram { n, merges })
}

/// Cut into `k` clusters; errors when there are fewer vectors than `k`.
pub fn complete_linkage_cluster(vectors: &[Vec<f64>], k: usize) -> Result<(Dendrogram, Vec<Vec<usize>>), ClusterError> {
    if vectors.len() < k || k == 0 {
        return Err(ClusterError::TooFew { have: vectors.len(), target: k });
    }
    let d = complete_linkage(vectors)?;
    let clusters = d.cut(k);
    Ok((d, clusters))
}

fn cluster_mean(trajs: &[&Trajectory], members: &[usize]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for &i in members {
        for (a, v) in m.iter_mut().zip(trajs[i].values) {
            *a += v / members.len() as f64;
        }
    }
    m
}

/// Labels for clusters of one direction subset, given their mean trajectories.
pub fn label_archetypes(direction: Direction, means: &[[f64; 3]]) -> Vec<Archetype> {
    let mut labels = vec![Archetype::Gradual; means.len()];
    if means.is_empty() {
        return labels;
    }
    let by_early = |a: &usize, b: &usize| means[*a][0].total_cmp(&means[*b][0]).then(a.cmp(b));
    match direction {
        Direction::Decrease => {
            let quick = (0..means.len()).min_by(by_early).expect("nonempty");
            labels[quick] = Archetype::Quick;
            let rebound = (0..means.len())
                .filter(|&i| i != quick && means[i][0] < 0.0 && means[i][2] > means[i][1])
                .min_by(by_early);
            if let Some(r) = rebound {
                labels[r] = Archetype::Rebound;
            }
        }
        Direction::Increase => {
            labels.fill(Archetype::Adverse);
            let late = (0..means.len()).filter(|&i| means[i][2] < means[i][0]).max_by(by_early);
            if let Some(l) = late {
                labels[l] = Archetype::Late;
            }
        }
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeConfig {
    pub decrease_clusters: usize,
    pub increase_clusters: usize,
    /// Terminal clusters whose mean shapes are closer than this are merged.
    pub merge_threshold: f64,
    /// Constant trajectories with |value| below this are treated as no change.
    pub zero_tolerance: f64,
}

impl Default for ArchetypeConfig {
    fn default() -> Self {
        ArchetypeConfig { decrease_clusters: 3, increase_clusters: 2, merge_threshold: 0.05, zero_tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeAssignment {
    pub participant_id: String,
    pub arm: Arm,
    pub direction: Direction,
    pub archetype: Archetype,
    pub values: [f64; 3],
    pub cluster_mean: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeResult {
    pub assignments: Vec<ArchetypeAssignment>,
    /// Constant no-change trajectories left out of clustering.
    pub unchanged: Vec<String>,
    pub notes: Vec<String>,
}

fn is_constant(v: &[f64; 3]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Split by direction, cluster each subset and label the clusters.
///
/// A subset smaller than its cluster target is clustered into as many groups
/// as it has members, with a note.
pub fn cluster_archetypes(trajectories: &[Trajectory], cfg: &ArchetypeConfig) -> Result<ArchetypeResult, ClusterError> {
    let mut result = ArchetypeResult { assignments: Vec::new(), unchanged: Vec::new(), notes: Vec::new() };
    let mut sorted: Vec<&Trajectory> = trajectories.iter().collect();
    sorted.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    let assign = |t: &Trajectory, archetype: Archetype, cluster_mean: [f64; 3]| ArchetypeAssignment {
        participant_id: t.participant_id.clone(),
        arm: t.arm,
        direction: t.direction,
        archetype,
        values: t.values,
        cluster_mean,
    };
    for (direction, target) in [(Direction::Decrease, cfg.decrease_clusters), (Direction::Increase, cfg.increase_clusters)] {
        let mut subset: Vec<&Trajectory> = Vec::new();
        for t in sorted.iter().copied().filter(|t| t.direction == direction) {
            if is_constant(&t.values) {
                if t.values[0].abs() < cfg.zero_tolerance {
                    result.unchanged.push(t.participant_id.clone());
                } else if t.values[0] < 0.0 {
                    result.assignments.push(assign(t, Archetype::Gradual, t.values));
                } else {
                    result.assignments.push(assign(t, Archetype::Adverse, t.values));
                }
            } else {
                subset.push(t);
            }
        }
        if subset.is_empty() {
            continue;
        }
        let k = target.min(subset.len());
        if k < target {
            result.notes.push(format!("{} subset has {} trajectories; cut to {k} cluster(s)", direction.as_str(), subset.len()));
        }
        let vectors: Vec<Vec<f64>> = subset.iter().map(|t| t.values.to_vec()).collect();
        let (_, mut clusters) = complete_linkage_cluster(&vectors, k)?;
        loop {
            let means: Vec<[f64; 3]> = clusters.iter().map(|c| cluster_mean(&subset, c)).collect();
            let mut close = None;
            'outer: for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    if corr_distance(&means[i], &means[j]).is_ok_and(|d| d < cfg.merge_threshold) {
                        close = Some((i, j));
                        break 'outer;
                    }
                }
            }
            let Some((i, j)) = close else { break };
            let moved = clusters.remove(j);
            clusters[i].extend(moved);
            clusters[i].sort_unstable();
            result.notes.push(format!("{} clusters {i} and {j} merged (near-identical shapes)", direction.as_str()));
        }
        let means: Vec<[f64; 3]> = clusters.iter().map(|c| cluster_mean(&subset, c)).collect();
        let labels = label_archetypes(direction, &means);
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                result.assignments.push(assign(subset[i], labels[c], means[c]));
            }
        }
    }
    result.assignments.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    Ok(result)
}

/// Percentage of each arm's assigned participants in each archetype.
pub fn archetype_shares(assignments: &[ArchetypeAssignment]) -> BTreeMap<Arm, [f64; 5]> {
    let mut counts: BTreeMap<Arm, [usize; 5]> = BTreeMap::new();
    for a in assignments {
        counts.entry(a.arm).or_default()[a.archetype.index()] += 1;
    }
    counts
        .into_iter()
        .map(|(arm, c)| {
            let total: usize = c.iter().sum();
            (arm, c.map(|v| 100.0 * v as f64 / total as f64))
        })
        .collect()
}

pub fn write_assignments_csv<W: Write>(assignments: &[ArchetypeAssignment], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "arm", "direction", "archetype", "early", "middle", "late"])?;
    for a in assignments {
        w.write_record([
            a.participant_id.clone(),
            a.arm.to_string(),
            a.direction.as_str().to_string(),
            a.archetype.to_string(),
            format!("{:.6}", a.values[0]),
            format!("{:.6}", a.values[1]),
            format!("{:.6}", a.values[2]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
