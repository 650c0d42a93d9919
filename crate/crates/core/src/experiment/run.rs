use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::baseline::{match_tasks_to_clusters, random_unconstrained, random_with_sizes};
use super::config::{BaselineMode, ExperimentConfig};
use crate::clustering::{cut, hac_build, ClusterAssignment, Dendrogram};
use crate::data::{load_feature_file, load_idx, partition_dataset, planted_tasks, synth_pool, synth_tasks};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fl::hierarchy::{run_on_splits, stack};
use crate::fl::{evaluate, history_csv, split_users, ClusterState, LayeredModel, RoundRecord, TrainingConfig};
use crate::rng::mix_seed;
use crate::similarity::{similarity_from_features, EigenSummary, RelevanceMatrix};

/// Users of an experiment, and their ground-truth tasks when known.
#[derive(Debug, Clone)]
pub struct LoadedUsers {
    pub users: Vec<FeatureMatrix>,
    pub tasks: Option<Vec<usize>>,
    /// Class labels belonging to each task, when the source defines them.
    /// Task accuracy is then measured on in-task samples only.
    pub task_classes: Option<Vec<Vec<u16>>>,
}

pub fn load_users(config: &ExperimentConfig) -> Result<LoadedUsers> {
    let ds = &config.dataset;
    let pooled = if let Some(idx) = &ds.idx {
        Some(load_idx(&idx.images, &idx.labels)?)
    } else if let Some(pool) = &ds.feature_pool {
        Some(load_feature_file(&pool.file)?)
    } else if let Some(spec) = &ds.synthetic_pool {
        Some(synth_pool(spec)?)
    } else {
        None
    };
    if let Some(pool) = pooled {
        let partition = config
            .partition
            .as_ref()
            .ok_or_else(|| Error::Config("pooled dataset without [partition]".into()))?;
        let plan = partition.plan(config.seed)?;
        return Ok(LoadedUsers {
            users: partition_dataset(&pool, &plan)?,
            tasks: Some(plan.planted_tasks()),
            task_classes: Some(partition.tasks.clone()),
        });
    }
    if let Some(spec) = &ds.synthetic {
        let task_classes = (0..spec.users_per_task.len() as u16)
            .map(|t| vec![2 * t + 1, 2 * t + 2])
            .collect();
        return Ok(LoadedUsers {
            users: synth_tasks(spec)?,
            tasks: Some(planted_tasks(&spec.users_per_task)),
            task_classes: Some(task_classes),
        });
    }
    if let Some(files) = &ds.features {
        let users = files
            .files
            .iter()
            .enumerate()
            .map(|(i, f)| load_feature_file(f).map(|m| m.with_user_id(i as u32)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(LoadedUsers {
            users,
            tasks: files.tasks.clone(),
            task_classes: None,
        });
    }
    Err(Error::Config("no dataset source".into()))
}

/// Output of the one-shot clustering stage.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub summaries: Vec<EigenSummary>,
    pub relevance: RelevanceMatrix,
    pub dendrogram: Option<Dendrogram>,
    pub assignment: ClusterAssignment,
}

pub fn cluster_users(users: &[FeatureMatrix], config: &ExperimentConfig) -> Result<ClusterReport> {
    let (summaries, relevance) =
        similarity_from_features(users, &config.similarity).map_err(|e| e.in_stage("similarity"))?;
    let clusters = config.clustering.clusters;
    // a single user has nothing to merge
    let (dendrogram, assignment) = if users.len() == 1 {
        if clusters != 1 {
            return Err(Error::Config(format!("one user cannot form {clusters} clusters")).in_stage("clustering"));
        }
        (None, ClusterAssignment::new(vec![0], 1)?)
    } else {
        let d = hac_build(&relevance, config.clustering.linkage).map_err(|e| e.in_stage("clustering"))?;
        let a = cut(&d, clusters).map_err(|e| e.in_stage("clustering"))?;
        (Some(d), a)
    };
    Ok(ClusterReport {
        summaries,
        relevance,
        dendrogram,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample variance (`n - 1` denominator); 0 for a single value.
    pub variance: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, variance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RepetitionResult {
    pub index: usize,
    pub seed: u64,
    pub assignment: ClusterAssignment,
    /// Final-round held-out accuracy of each cluster on its members' data.
    pub cluster_accuracy: Vec<f64>,
    /// Final accuracy on each task's held-out data (restricted to the task's
    /// classes when known), using the cluster matched to that task.
    pub task_accuracy: Option<Vec<f64>>,
    pub task_clusters: Option<Vec<usize>>,
    pub history: Vec<Vec<RoundRecord>>,
    #[serde(skip)]
    pub states: Vec<ClusterState>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub baseline: BaselineMode,
    pub clustering: ClusterReport,
    pub repetitions: Vec<RepetitionResult>,
    pub cluster_summary: Vec<Stat>,
    pub task_summary: Option<Vec<Stat>>,
}

fn classes_of(users: &[FeatureMatrix], config: &ExperimentConfig) -> Result<usize> {
    if let Some(c) = config.model.classes {
        return Ok(c);
    }
    users
        .iter()
        .filter_map(|u| u.labels())
        .flat_map(|l| l.iter().copied())
        .max()
        .map(|c| c as usize)
        .ok_or_else(|| Error::Data("training needs labelled users".into()))
}

fn repetition_seed(seed: u64, rep: usize) -> u64 {
    mix_seed(&[seed, rep as u64])
}

/// Trains one repetition on a fixed assignment. Both baseline modes go
/// through here; only the assignment differs.
pub fn train_repetition(
    loaded: &LoadedUsers,
    assignment: &ClusterAssignment,
    config: &ExperimentConfig,
    index: usize,
) -> Result<RepetitionResult> {
    let users = &loaded.users;
    let seed = repetition_seed(config.seed, index);
    let training = TrainingConfig {
        seed,
        ..config.training.clone()
    };
    let d = users[0].dim();
    let mut sizes = vec![d];
    sizes.extend(&config.model.hidden);
    sizes.push(classes_of(users, config)?);
    let init = LayeredModel::mlp(&sizes, training.common_prefix_len, seed)?;

    if assignment.len() != users.len() {
        return Err(Error::InvalidInput("assignment does not cover every user".into()));
    }
    training.validate()?;
    let splits = split_users(users, &training)?;
    let states = run_on_splits(&splits, assignment, &training, &init)?;
    let cluster_accuracy = states
        .iter()
        .map(|s| s.history.last().map_or(f64::NAN, |r| r.eval_accuracy))
        .collect();

    let (task_accuracy, task_clusters) = match &loaded.tasks {
        Some(tasks) => {
            let hosts = match_tasks_to_clusters(assignment, tasks);
            let acc = hosts
                .iter()
                .enumerate()
                .map(|(t, &c)| {
                    let classes = loaded.task_classes.as_ref().and_then(|tc| tc.get(t));
                    let parts = (0..users.len())
                        .filter(|&u| tasks[u] == t)
                        .filter_map(|u| splits[u].eval.as_ref())
                        .map(|eval| in_task(eval, classes))
                        .collect::<Result<Vec<_>>>()?;
                    let parts: Vec<&FeatureMatrix> = parts.iter().flatten().collect();
                    match stack(&parts)? {
                        Some(eval) => evaluate(&states[c].model, &eval).map(|(_, a)| a),
                        None => Ok(f64::NAN),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(acc), Some(hosts))
        }
        None => (None, None),
    };
    Ok(RepetitionResult {
        index,
        seed,
        assignment: assignment.clone(),
        cluster_accuracy,
        task_accuracy,
        task_clusters,
        history: states.iter().map(|s| s.history.clone()).collect(),
        states,
    })
}

/// Rows of `eval` whose label is one of `classes` (all rows when unknown).
fn in_task(eval: &FeatureMatrix, classes: Option<&Vec<u16>>) -> Result<Option<FeatureMatrix>> {
    let (Some(classes), Some(labels)) = (classes, eval.labels()) else {
        return Ok(Some(eval.clone()));
    };
    let keep: Vec<usize> = (0..labels.len()).filter(|&i| classes.contains(&labels[i])).collect();
    if keep.is_empty() {
        return Ok(None);
    }
    eval.select_rows(&keep).map(Some)
}

pub fn assignment_for(
    mode: BaselineMode,
    similarity: &ClusterAssignment,
    seed: u64,
    rep: usize,
) -> Result<ClusterAssignment> {
    let seed = mix_seed(&[seed, rep as u64, 0xBA5E]);
    match mode {
        BaselineMode::DataSimilarity => Ok(similarity.clone()),
        BaselineMode::RandomClustering => random_with_sizes(&similarity.sizes(), seed),
        BaselineMode::RandomUnconstrained => {
            random_unconstrained(similarity.len(), similarity.num_clusters(), seed)
        }
    }
}

/// Clusters once, then trains `repetitions` times and writes every artifact
/// under `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let loaded = load_users(config).map_err(|e| e.in_stage("data"))?;
    let report = run_loaded(&loaded, config)?;
    write_experiment(&config.out, &report).map_err(|e| e.in_stage("output"))?;
    Ok(report)
}

/// [`run_experiment`] on already loaded users, without writing files.
pub fn run_loaded(loaded: &LoadedUsers, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let clustering = cluster_users(&loaded.users, config)?;
    let repetitions = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let assignment = assignment_for(config.baseline, &clustering.assignment, config.seed, rep)?;
            train_repetition(loaded, &assignment, config, rep)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("training"))?;

    let clusters = clustering.assignment.num_clusters();
    let cluster_summary = (0..clusters)
        .map(|c| Stat::of(&repetitions.iter().map(|r| r.cluster_accuracy[c]).collect::<Vec<_>>()))
        .collect();
    let task_summary = repetitions[0].task_accuracy.as_ref().map(|first| {
        (0..first.len())
            .map(|t| {
                Stat::of(
                    &repetitions
                        .iter()
                        .map(|r| r.task_accuracy.as_ref().unwrap()[t])
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    });
    Ok(ExperimentReport {
        baseline: config.baseline,
        clustering,
        repetitions,
        cluster_summary,
        task_summary,
    })
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_clustering(out: &Path, report: &ClusterReport) -> Result<()> {
    mkdir(out)?;
    write(out.join("relevance.json"), serde_json::to_vec_pretty(&report.relevance)?)?;
    write(out.join("relevance.csv"), report.relevance.to_csv())?;
    write(out.join("summaries.json"), serde_json::to_vec(&report.summaries)?)?;
    if let Some(d) = &report.dendrogram {
        write(out.join("dendrogram.json"), serde_json::to_vec_pretty(d)?)?;
    }
    write(out.join("assignment.json"), serde_json::to_vec_pretty(&report.assignment)?)?;
    let mut csv = String::from("user,cluster\n");
    for (i, id) in report.relevance.user_ids().iter().enumerate() {
        csv.push_str(&format!("{id},{}\n", report.assignment.cluster_of(i)));
    }
    write(out.join("assignment.csv"), csv)
}

fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("scope,index,mean_accuracy,variance\n");
    for (c, s) in report.cluster_summary.iter().enumerate() {
        out.push_str(&format!("cluster,{c},{},{}\n", s.mean, s.variance));
    }
    if let Some(tasks) = &report.task_summary {
        for (t, s) in tasks.iter().enumerate() {
            out.push_str(&format!("task,{t},{},{}\n", s.mean, s.variance));
        }
    }
    out
}

fn repetitions_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("repetition,seed,scope,index,accuracy\n");
    for r in &report.repetitions {
        for (c, a) in r.cluster_accuracy.iter().enumerate() {
            out.push_str(&format!("{},{},cluster,{c},{a}\n", r.index, r.seed));
        }
        if let Some(task) = &r.task_accuracy {
            for (t, a) in task.iter().enumerate() {
                out.push_str(&format!("{},{},task,{t},{a}\n", r.index, r.seed));
            }
        }
    }
    out
}

pub fn write_experiment(out: &Path, report: &ExperimentReport) -> Result<()> {
    write_clustering(out, &report.clustering)?;
    for rep in &report.repetitions {
        let dir = out.join(format!("rep_{:02}", rep.index));
        mkdir(&dir)?;
        write(dir.join("assignment.json"), serde_json::to_vec_pretty(&rep.assignment)?)?;
        write(dir.join("history.csv"), history_csv(&rep.states))?;
        write(dir.join("history.json"), serde_json::to_vec_pretty(&rep.history)?)?;
        for s in &rep.states {
            write(dir.join(format!("model_cluster_{}.json", s.lps_id)), serde_json::to_vec(&s.model)?)?;
        }
    }
    write(out.join("summary.csv"), summary_csv(report))?;
    write(out.join("repetitions.csv"), repetitions_csv(report))?;
    write(out.join("summary.json"), serde_json::to_vec_pretty(report)?)
}

/// Clustering stage only; writes `R`, the dendrogram and the assignment.
pub fn cluster_only(config: &ExperimentConfig) -> Result<ClusterReport> {
    config.validate()?;
    let loaded = load_users(config).map_err(|e| e.in_stage("data"))?;
    let report = cluster_users(&loaded.users, config)?;
    write_clustering(&config.out, &report).map_err(|e| e.in_stage("output"))?;
    Ok(report)
}
