//! Hierarchical agglomerative clustering on `1 - R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::RelevanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    /// UPGMA: mean pairwise dissimilarity.
    #[default]
    Average,
    Single,
    Complete,
}

/// One agglomeration step. Leaves are `0..N`, the cluster created by merge
/// `k` has id `N + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// The side containing the smaller user index.
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub height: f64,
    pub merged_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DendrogramRecord")]
pub struct Dendrogram {
    leaf_count: usize,
    merges: Vec<Merge>,
}

#[derive(Deserialize)]
struct DendrogramRecord {
    leaf_count: usize,
    merges: Vec<Merge>,
}

impl TryFrom<DendrogramRecord> for Dendrogram {
    type Error = Error;

    fn try_from(rec: DendrogramRecord) -> Result<Self> {
        Dendrogram::new(rec.leaf_count, rec.merges)
    }
}

impl Dendrogram {
    /// Checks that `merges` forms a single binary tree over `leaf_count`
    /// leaves.
    pub fn new(leaf_count: usize, merges: Vec<Merge>) -> Result<Self> {
        if leaf_count < 1 || merges.len() + 1 != leaf_count {
            return Err(Error::InvalidInput(format!(
                "{} merges cannot join {leaf_count} leaves",
                merges.len()
            )));
        }
        let mut size = vec![1usize; leaf_count];
        let mut used = vec![false; leaf_count];
        for (k, m) in merges.iter().enumerate() {
            let next = leaf_count + k;
            for c in [m.cluster_a, m.cluster_b] {
                if c >= next || used[c] {
                    return Err(Error::InvalidInput(format!(
                        "merge {k} references unavailable cluster {c}"
                    )));
                }
                used[c] = true;
            }
            if m.cluster_a == m.cluster_b || !(m.height >= 0.0) {
                return Err(Error::InvalidInput(format!("merge {k} is malformed")));
            }
            let merged = size[m.cluster_a] + size[m.cluster_b];
            if merged != m.merged_size {
                return Err(Error::InvalidInput(format!(
                    "merge {k} claims size {}, expected {merged}",
                    m.merged_size
                )));
            }
            size.push(merged);
            used.push(false);
        }
        Ok(Self { leaf_count, merges })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.merges.iter().map(|m| m.height)
    }
}

fn linkage_update(linkage: Linkage, size_a: usize, d_a: f64, size_b: usize, d_b: f64) -> f64 {
    match linkage {
        Linkage::Average => {
            (size_a as f64 * d_a + size_b as f64 * d_b) / (size_a + size_b) as f64
        }
        Linkage::Single => d_a.min(d_b),
        Linkage::Complete => d_a.max(d_b),
    }
}

/// Builds the merge tree on `1 - R`. Equal-height candidates are resolved by
/// the smallest `(min member, other min member)` pair.
pub fn hac_build(similarity: &RelevanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = similarity.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "clustering needs at least 2 users, got {n}"
        )));
    }
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 - similarity.get(i, j)).collect())
        .collect();
    // slot i holds (cluster id, size, min member) while active
    let mut slots: Vec<Option<(usize, usize, usize)>> = (0..n).map(|i| Some((i, 1, i))).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            let Some((_, _, min_i)) = slots[i] else { continue };
            for j in (i + 1)..n {
                let Some((_, _, min_j)) = slots[j] else { continue };
                let h = dist[i][j];
                let (lo, hi) = (min_i.min(min_j), min_i.max(min_j));
                let better = match best {
                    None => true,
                    Some((bh, blo, bhi, _, _)) => h < bh || (h == bh && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((h, lo, hi, i, j));
                }
            }
        }
        let (height, _, _, si, sj) = best.expect("at least two active clusters");
        let (id_i, size_i, min_i) = slots[si].unwrap();
        let (id_j, size_j, min_j) = slots[sj].unwrap();
        let (cluster_a, cluster_b) = if min_i < min_j { (id_i, id_j) } else { (id_j, id_i) };

        for k in 0..n {
            if k == si || k == sj || slots[k].is_none() {
                continue;
            }
            let d = linkage_update(linkage, size_i, dist[si][k], size_j, dist[sj][k]);
            dist[si][k] = d;
            dist[k][si] = d;
        }
        slots[si] = Some((n + step, size_i + size_j, min_i.min(min_j)));
        slots[sj] = None;
        merges.push(Merge {
            cluster_a,
            cluster_b,
            height: height.max(0.0),
            merged_size: size_i + size_j,
        });
    }
    Dendrogram::new(n, merges)
}

/// Partition of `N` users into `T` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    assignment: Vec<usize>,
    num_clusters: usize,
}

impl ClusterAssignment {
    pub fn new(assignment: Vec<usize>, num_clusters: usize) -> Result<Self> {
        if assignment.is_empty() || num_clusters == 0 {
            return Err(Error::InvalidInput("empty cluster assignment".into()));
        }
        let mut seen = vec![false; num_clusters];
        for (user, &c) in assignment.iter().enumerate() {
            if c >= num_clusters {
                return Err(Error::InvalidInput(format!(
                    "user {user} assigned to cluster {c} of {num_clusters}"
                )));
            }
            seen[c] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(Self {
            assignment,
            num_clusters,
        })
    }

    /// Relabels arbitrary (non-empty) groups so that ids ascend with each
    /// cluster's smallest member.
    pub fn canonical(groups: &[usize]) -> Result<Self> {
        let mut relabel = std::collections::HashMap::new();
        let assignment = groups
            .iter()
            .map(|g| {
                let next = relabel.len();
                *relabel.entry(*g).or_insert(next)
            })
            .collect();
        Self::new(assignment, relabel.len())
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_of(&self, user: usize) -> usize {
        self.assignment[user]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assignment
    }

    /// User indices in cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&u| self.assignment[u] == c)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Same member sets, ignoring labels.
    pub fn same_partition(&self, other: &Self) -> bool {
        self.len() == other.len()
            && Self::canonical(&self.assignment).ok() == Self::canonical(&other.assignment).ok()
    }
}

/// Undoes the last `T - 1` merges.
pub fn cut(dendrogram: &Dendrogram, num_clusters: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.leaf_count();
    if num_clusters < 1 || num_clusters > n {
        return Err(Error::InvalidInput(format!(
            "cannot cut {n} leaves into {num_clusters} clusters"
        )));
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut alive = vec![true; n];
    for m in &dendrogram.merges()[..n - num_clusters] {
        let mut joined = std::mem::take(&mut members[m.cluster_a]);
        joined.append(&mut std::mem::take(&mut members[m.cluster_b]));
        alive[m.cluster_a] = false;
        alive[m.cluster_b] = false;
        members.push(joined);
        alive.push(true);
    }
    let mut groups = vec![0usize; n];
    for (id, group) in members.iter().enumerate() {
        if alive[id] {
            for &u in group {
                groups[u] = id;
            }
        }
    }
    ClusterAssignment::canonical(&groups)
}
