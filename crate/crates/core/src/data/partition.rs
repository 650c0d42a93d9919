use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: usize,
    pub class_labels: BTreeSet<u16>,
    /// Fraction of a user's samples drawn from this task's classes.
    #[serde(default = "default_majority")]
    pub majority_fraction: f64,
}

fn default_majority() -> f64 {
    0.9
}

impl TaskSpec {
    pub fn new(task_id: usize, class_labels: impl IntoIterator<Item = u16>, majority_fraction: f64) -> Result<Self> {
        let spec = Self {
            task_id,
            class_labels: class_labels.into_iter().collect(),
            majority_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_labels.is_empty() {
            return Err(Error::InvalidInput(format!("task {} has no classes", self.task_id)));
        }
        if !(self.majority_fraction > 0.0 && self.majority_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "task {}: majority_fraction {} outside (0, 1]",
                self.task_id, self.majority_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserShare {
    pub user_id: u32,
    pub task: TaskSpec,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPartitionPlan {
    pub assignments: Vec<UserShare>,
    pub seed: u64,
}

impl UserPartitionPlan {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for share in &self.assignments {
            share.task.validate()?;
            if !ids.insert(share.user_id) {
                return Err(Error::InvalidInput(format!("duplicate user id {}", share.user_id)));
            }
            if share.sample_count == 0 {
                return Err(Error::InvalidInput(format!("user {} has no samples", share.user_id)));
            }
        }
        Ok(())
    }

    /// Task id of each user, in plan order.
    pub fn planted_tasks(&self) -> Vec<usize> {
        self.assignments.iter().map(|s| s.task.task_id).collect()
    }
}

/// Carves `data` into one user per plan entry. Each user gets
/// `round(majority_fraction * count)` samples from its task's classes and the
/// rest uniformly from the other classes, all without replacement across
/// users.
pub fn partition_dataset(data: &FeatureMatrix, plan: &UserPartitionPlan) -> Result<Vec<FeatureMatrix>> {
    plan.validate()?;
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data("dataset has no labels".into()))?;
    let present: BTreeSet<u16> = labels.iter().copied().collect();

    let mut rng = rng_for(&[plan.seed, 0x9A27]);
    let mut available: Vec<usize> = (0..data.samples()).collect();
    available.shuffle(&mut rng);
    let mut taken = vec![false; data.samples()];

    let mut users = Vec::with_capacity(plan.assignments.len());
    for share in &plan.assignments {
        if let Some(missing) = share.task.class_labels.iter().find(|c| !present.contains(c)) {
            return Err(Error::Data(format!(
                "task {} requests class {missing}, absent from the dataset",
                share.task.task_id
            )));
        }
        let inside = (share.task.majority_fraction * share.sample_count as f64).round() as usize;
        let outside = share.sample_count - inside;
        let mut chosen = Vec::with_capacity(share.sample_count);
        for (want, in_task) in [(inside, true), (outside, false)] {
            let picked: Vec<usize> = available
                .iter()
                .copied()
                .filter(|&i| !taken[i] && share.task.class_labels.contains(&labels[i]) == in_task)
                .take(want)
                .collect();
            if picked.len() < want {
                return Err(Error::Data(format!(
                    "user {}: needs {want} {} samples, only {} left",
                    share.user_id,
                    if in_task { "in-task" } else { "out-of-task" },
                    picked.len()
                )));
            }
            for &i in &picked {
                taken[i] = true;
            }
            chosen.extend(picked);
        }
        chosen.sort_unstable();
        users.push(data.select_rows(&chosen)?.with_user_id(share.user_id));
    }
    Ok(users)
}
