use rand::seq::SliceRandom;
use rand::Rng;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Uniformly random partition whose cluster sizes equal `sizes`.
pub fn random_with_sizes(sizes: &[usize], seed: u64) -> Result<ClusterAssignment> {
    let n: usize = sizes.iter().sum();
    let mut users: Vec<usize> = (0..n).collect();
    users.shuffle(&mut rng_for(&[seed, 0x5123]));
    let mut groups = vec![0; n];
    let mut next = users.into_iter();
    for (c, &size) in sizes.iter().enumerate() {
        for u in next.by_ref().take(size) {
            groups[u] = c;
        }
    }
    ClusterAssignment::canonical(&groups)
}

/// Random partition of `n` users into `clusters` non-empty groups: one
/// random user seeds each cluster, the rest pick a cluster uniformly.
pub fn random_unconstrained(n: usize, clusters: usize, seed: u64) -> Result<ClusterAssignment> {
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidInput(format!("cannot split {n} users into {clusters} clusters")));
    }
    let mut rng = rng_for(&[seed, 0x0C1A]);
    let mut users: Vec<usize> = (0..n).collect();
    users.shuffle(&mut rng);
    let mut groups = vec![0; n];
    for (k, &u) in users.iter().enumerate() {
        groups[u] = if k < clusters { k } else { rng.random_range(0..clusters) };
    }
    ClusterAssignment::canonical(&groups)
}

/// For every task, the cluster that hosts it: the assignment of tasks to
/// clusters maximizing the number of users placed with their own task.
/// Ties go to the lexicographically smallest mapping. Tasks without a
/// dedicated cluster (more tasks than clusters) fall back to the cluster
/// holding most of their users.
pub fn match_tasks_to_clusters(assignment: &ClusterAssignment, tasks: &[usize]) -> Vec<usize> {
    let num_tasks = tasks.iter().max().map_or(0, |&t| t + 1);
    let clusters = assignment.num_clusters();
    let mut overlap = vec![vec![0usize; clusters]; num_tasks];
    for (u, &t) in tasks.iter().enumerate() {
        overlap[t][assignment.cluster_of(u)] += 1;
    }
    let greedy = |t: usize| (0..clusters).fold(0, |b, c| if overlap[t][c] > overlap[t][b] { c } else { b });

    if num_tasks <= clusters && clusters <= 8 {
        let mut best: Option<(usize, Vec<usize>)> = None;
        let mut current = Vec::with_capacity(num_tasks);
        let mut used = vec![false; clusters];
        search(&overlap, &mut current, &mut used, 0, &mut best);
        if let Some((_, mapping)) = best {
            return mapping;
        }
    }
    (0..num_tasks).map(greedy).collect()
}

fn search(
    overlap: &[Vec<usize>],
    current: &mut Vec<usize>,
    used: &mut [bool],
    score: usize,
    best: &mut Option<(usize, Vec<usize>)>,
) {
    if current.len() == overlap.len() {
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            *best = Some((score, current.clone()));
        }
        return;
    }
    let t = current.len();
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            current.push(c);
            search(overlap, current, used, score + overlap[t][c], best);
            current.pop();
            used[c] = false;
        }
    }
}
