use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fl::aggregate::{fedavg_aggregate, AggregationScope};
use crate::fl::model::LayeredModel;
use crate::fl::train::{evaluate, local_update, split_train_eval, GpsWeighting, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Sample-weighted mean of the members' final-epoch training loss.
    pub train_loss: f64,
    /// `NaN` when the cluster has no held-out samples.
    pub eval_loss: f64,
    pub eval_accuracy: f64,
}

/// One local parameter server and its users.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub lps_id: usize,
    pub members: Vec<usize>,
    pub model: LayeredModel,
    pub history: Vec<RoundRecord>,
}

/// A user's data after the held-out split.
#[derive(Debug, Clone)]
pub struct UserSplit {
    pub train: FeatureMatrix,
    pub eval: Option<FeatureMatrix>,
}

/// Splits every user with the config's seed and eval fraction.
pub fn split_users(users: &[FeatureMatrix], config: &TrainingConfig) -> Result<Vec<UserSplit>> {
    users
        .iter()
        .map(|u| {
            split_train_eval(u, config.eval_fraction, config.seed)
                .map(|(train, eval)| UserSplit { train, eval })
        })
        .collect()
}

/// Stacks the held-out samples of `members`.
pub fn pooled_eval(splits: &[UserSplit], members: &[usize]) -> Result<Option<FeatureMatrix>> {
    let parts: Vec<&FeatureMatrix> = members.iter().filter_map(|&m| splits[m].eval.as_ref()).collect();
    stack(&parts)
}

pub(crate) fn stack(parts: &[&FeatureMatrix]) -> Result<Option<FeatureMatrix>> {
    let Some(first) = parts.first() else {
        return Ok(None);
    };
    let d = first.dim();
    let n: usize = parts.iter().map(|p| p.samples()).sum();
    let mut data = nalgebra::DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for p in parts {
        data.rows_mut(row, p.samples()).copy_from(p.data());
        row += p.samples();
        labels.extend_from_slice(p.labels().unwrap_or(&[]));
    }
    let labels = (labels.len() == n).then_some(labels);
    FeatureMatrix::new(first.user_id(), data, labels).map(Some)
}

fn train_cluster(
    lps_id: usize,
    members: &[usize],
    splits: &[UserSplit],
    start: &LayeredModel,
    config: &TrainingConfig,
    round: usize,
) -> Result<(LayeredModel, f64)> {
    let counts: Vec<usize> = members.iter().map(|&m| splits[m].train.samples()).collect();
    let mut model = start.clone();
    let mut loss = f64::NAN;
    for lps_round in 0..config.lps_rounds {
        let updates = members
            .iter()
            .map(|&m| {
                let user = &splits[m].train;
                local_update(&model, user, config, round, lps_round).map_err(|e| Error::Training {
                    round,
                    cluster: lps_id,
                    user: user.user_id(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let total: usize = counts.iter().sum();
        loss = updates
            .iter()
            .zip(&counts)
            .map(|(u, &c)| u.loss * c as f64)
            .sum::<f64>()
            / total as f64;
        let models: Vec<LayeredModel> = updates.into_iter().map(|u| u.model).collect();
        model = fedavg_aggregate(&models, &counts, AggregationScope::AllLayers, 0)?;
    }
    Ok((model, loss))
}

/// Multi-task hierarchical FedAvg.
///
/// Every global round, each cluster runs `lps_rounds` FedAvg rounds over its
/// members, then the global server averages the common prefix across clusters
/// and every cluster resumes from that prefix plus its own task layers.
pub fn run_mthfl(
    users: &[FeatureMatrix],
    assignment: &ClusterAssignment,
    config: &TrainingConfig,
    init: &LayeredModel,
) -> Result<Vec<ClusterState>> {
    config.validate()?;
    if assignment.len() != users.len() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} users, {} given",
            assignment.len(),
            users.len()
        )));
    }
    let init = init.clone().with_common_prefix(config.common_prefix_len)?;
    for u in users {
        if u.dim() != init.input_dim() {
            return Err(Error::Data(format!(
                "user {} has dimension {}, model expects {}",
                u.user_id(),
                u.dim(),
                init.input_dim()
            )));
        }
    }
    let splits = split_users(users, config)?;
    run_on_splits(&splits, assignment, config, &init)
}

pub fn run_on_splits(
    splits: &[UserSplit],
    assignment: &ClusterAssignment,
    config: &TrainingConfig,
    init: &LayeredModel,
) -> Result<Vec<ClusterState>> {
    let clusters = assignment.num_clusters();
    let members: Vec<Vec<usize>> = (0..clusters).map(|c| assignment.members(c)).collect();
    let eval_sets = members
        .iter()
        .map(|m| pooled_eval(splits, m))
        .collect::<Result<Vec<_>>>()?;
    let cluster_weight: Vec<usize> = members
        .iter()
        .map(|m| match config.gps_weighting {
            GpsWeighting::SampleCount => m.iter().map(|&u| splits[u].train.samples()).sum(),
            GpsWeighting::Uniform => 1,
        })
        .collect();

    let mut states: Vec<ClusterState> = (0..clusters)
        .map(|c| ClusterState {
            lps_id: c,
            members: members[c].clone(),
            model: init.clone(),
            history: Vec::with_capacity(config.global_rounds),
        })
        .collect();

    for round in 0..config.global_rounds {
        let trained = states
            .par_iter()
            .map(|s| train_cluster(s.lps_id, &s.members, splits, &s.model, config, round))
            .collect::<Result<Vec<_>>>()?;
        let (models, losses): (Vec<_>, Vec<_>) = trained.into_iter().unzip();

        let models = if config.common_prefix_len > 0 {
            (0..clusters)
                .map(|c| fedavg_aggregate(&models, &cluster_weight, AggregationScope::CommonPrefix, c))
                .collect::<Result<Vec<_>>>()?
        } else {
            models
        };

        for ((state, model), loss) in states.iter_mut().zip(models).zip(losses) {
            let (eval_loss, eval_accuracy) = match &eval_sets[state.lps_id] {
                Some(eval) => evaluate(&model, eval)?,
                None => (f64::NAN, f64::NAN),
            };
            state.model = model;
            state.history.push(RoundRecord {
                round,
                train_loss: loss,
                eval_loss,
                eval_accuracy,
            });
        }
    }
    Ok(states)
}

/// `round,cluster,loss,accuracy` rows, rounds outer.
pub fn history_csv(states: &[ClusterState]) -> String {
    let mut out = String::from("round,cluster,loss,accuracy\n");
    let rounds = states.iter().map(|s| s.history.len()).max().unwrap_or(0);
    for r in 0..rounds {
        for s in states {
            if let Some(rec) = s.history.get(r) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    rec.round, s.lps_id, rec.train_loss, rec.eval_accuracy
                ));
            }
        }
    }
    out
}
