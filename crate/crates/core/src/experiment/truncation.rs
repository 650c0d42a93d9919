use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::load_users;
use crate::clustering::{cut, hac_build, ClusterAssignment};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::similarity::{eigen_summary, relevance_matrix, EigenSummary, RelevanceMatrix, SimilarityParams};

#[derive(Debug, Clone, Serialize)]
pub struct TruncationRow {
    pub keep: usize,
    pub relevance: RelevanceMatrix,
    pub assignment: ClusterAssignment,
    pub matches_full: bool,
    /// Shape each user sends: `keep x d`.
    pub exchanged: (usize, usize),
    /// Mean within-task minus mean cross-task `R`, when tasks are known.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub dim: usize,
    /// Shape of the untruncated exchange, `d x d`.
    pub full_exchange: (usize, usize),
    pub full_assignment: ClusterAssignment,
    pub rows: Vec<TruncationRow>,
    /// Smallest requested `p` whose partition equals the full-`d` partition.
    pub smallest_matching: Option<usize>,
    pub pairs: Vec<(usize, usize)>,
}

impl TruncationReport {
    /// `p,user_i,user_j,relevance` for every reported pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,user_i,user_j,relevance\n");
        for row in &self.rows {
            let ids = row.relevance.user_ids();
            for &(i, j) in &self.pairs {
                out.push_str(&format!("{},{},{},{}\n", row.keep, ids[i], ids[j], row.relevance.get(i, j)));
            }
        }
        out
    }
}

/// Mean `R` over same-task pairs minus mean over cross-task pairs.
pub fn task_margin(relevance: &RelevanceMatrix, tasks: &[usize]) -> Option<f64> {
    let (mut within, mut cross) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..relevance.len() {
        for j in (i + 1)..relevance.len() {
            let slot = if tasks[i] == tasks[j] { &mut within } else { &mut cross };
            slot.0 += relevance.get(i, j);
            slot.1 += 1;
        }
    }
    (within.1 > 0 && cross.1 > 0).then(|| within.0 / within.1 as f64 - cross.0 / cross.1 as f64)
}

pub fn truncation_on_users(
    users: &[FeatureMatrix],
    tasks: Option<&[usize]>,
    config: &ExperimentConfig,
    p_values: &[usize],
) -> Result<TruncationReport> {
    let dim = users.first().map(FeatureMatrix::dim).ok_or_else(|| Error::Data("no users".into()))?;
    if users.len() < 2 {
        return Err(Error::Data("truncation study needs at least two users".into()));
    }
    if let Some(&bad) = p_values.iter().find(|&&p| p == 0 || p > dim) {
        return Err(Error::Config(format!("p = {bad} outside 1..={dim}")));
    }
    let full: Vec<EigenSummary> = users
        .iter()
        .map(|u| eigen_summary(u, dim))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("similarity"))?;

    let clusters = config.clustering.clusters;
    let partition_for = |keep: usize| -> Result<(RelevanceMatrix, ClusterAssignment)> {
        let summaries = full.iter().map(|s| s.truncated(keep)).collect::<Result<Vec<_>>>()?;
        let params = SimilarityParams { keep, ..config.similarity };
        let r = relevance_matrix(&summaries, users, &params)?;
        let a = cut(&hac_build(&r, config.clustering.linkage)?, clusters)?;
        Ok((r, a))
    };
    let (_, full_assignment) = partition_for(dim)?;

    let mut keeps = p_values.to_vec();
    keeps.sort_unstable();
    keeps.dedup();
    let rows = keeps
        .iter()
        .map(|&keep| {
            let (relevance, assignment) = partition_for(keep)?;
            Ok(TruncationRow {
                keep,
                matches_full: assignment.same_partition(&full_assignment),
                margin: tasks.and_then(|t| task_margin(&relevance, t)),
                relevance,
                assignment,
                exchanged: (keep, dim),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let smallest_matching = rows.iter().find(|r| r.matches_full).map(|r| r.keep);

    let n = users.len();
    let pairs = match &config.truncation.pairs {
        Some(pairs) => {
            if let Some(bad) = pairs.iter().find(|(i, j)| *i >= n || *j >= n) {
                return Err(Error::Config(format!("pair {bad:?} references a missing user")));
            }
            pairs.clone()
        }
        None => (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect(),
    };
    Ok(TruncationReport {
        dim,
        full_exchange: (dim, dim),
        full_assignment,
        rows,
        smallest_matching,
        pairs,
    })
}

/// Relevance and partitions for each `p`, written to
/// `truncation.csv` / `truncation.json` under `config.out`.
pub fn truncation_study(config: &ExperimentConfig, p_values: &[usize]) -> Result<TruncationReport> {
    config.validate()?;
    let loaded = load_users(config).map_err(|e| e.in_stage("data"))?;
    let report = truncation_on_users(&loaded.users, loaded.tasks.as_deref(), config, p_values)?;
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv = out.join("truncation.csv");
    std::fs::write(&csv, report.to_csv()).map_err(|e| Error::io(csv, e))?;
    let json = out.join("truncation.json");
    std::fs::write(&json, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(json, e))?;
    Ok(report)
}
