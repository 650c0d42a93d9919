//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! repetitions = 6
//! out = "runs/fmnist"
//! baseline = "data-similarity"
//!
//! [dataset.synthetic-pool]      # exactly one [dataset.*] table
//! dim = 784
//!
//! [partition]
//! tasks = [[1, 2, 3, 4, 5, 7], [6, 8, 10], [9]]
//! users_per_task = [5, 3, 2]
//! samples_per_user = 300
//!
//! [similarity]
//! keep = 5
//!
//! [clustering]
//! clusters = 3
//!
//! [training]
//! global_rounds = 10
//!
//! [model]
//! hidden = [32]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::Linkage;
use crate::data::{PoolSpec, SynthSpec, TaskSpec, UserPartitionPlan, UserShare};
use crate::error::{Error, Result};
use crate::fl::TrainingConfig;
use crate::similarity::SimilarityParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFiles {
    /// One `FEDFEAT1` file per user.
    pub files: Vec<PathBuf>,
    /// Optional ground-truth task per file, used only for reporting.
    #[serde(default)]
    pub tasks: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturePool {
    pub file: PathBuf,
}

/// Where user data comes from. Pooled sources need a `[partition]` table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DatasetSource {
    pub idx: Option<IdxSource>,
    pub features: Option<FeatureFiles>,
    pub feature_pool: Option<FeaturePool>,
    pub synthetic: Option<SynthSpec>,
    pub synthetic_pool: Option<PoolSpec>,
}

impl DatasetSource {
    fn count(&self) -> usize {
        [
            self.idx.is_some(),
            self.features.is_some(),
            self.feature_pool.is_some(),
            self.synthetic.is_some(),
            self.synthetic_pool.is_some(),
        ]
        .iter()
        .filter(|s| **s)
        .count()
    }

    pub fn is_pooled(&self) -> bool {
        self.idx.is_some() || self.feature_pool.is_some() || self.synthetic_pool.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    /// Class labels of each task; task ids are positions in this list.
    pub tasks: Vec<Vec<u16>>,
    pub users_per_task: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples_per_user: usize,
    /// Per-user override of `samples_per_user`, in user order.
    #[serde(default)]
    pub samples: Option<Vec<usize>>,
    #[serde(default = "default_majority")]
    pub majority_fraction: f64,
    /// Defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_samples() -> usize {
    300
}

fn default_majority() -> f64 {
    0.9
}

impl PartitionConfig {
    pub fn plan(&self, fallback_seed: u64) -> Result<UserPartitionPlan> {
        if self.tasks.len() != self.users_per_task.len() {
            return Err(Error::Config(format!(
                "partition: {} tasks but {} users_per_task entries",
                self.tasks.len(),
                self.users_per_task.len()
            )));
        }
        let total: usize = self.users_per_task.iter().sum();
        if let Some(samples) = &self.samples {
            if samples.len() != total {
                return Err(Error::Config(format!(
                    "partition: {} sample overrides for {total} users",
                    samples.len()
                )));
            }
        }
        let mut assignments = Vec::with_capacity(total);
        for (task_id, (&count, classes)) in self.users_per_task.iter().zip(&self.tasks).enumerate() {
            let task = TaskSpec::new(task_id, classes.iter().copied(), self.majority_fraction)?;
            for _ in 0..count {
                let user = assignments.len();
                assignments.push(UserShare {
                    user_id: user as u32,
                    task: task.clone(),
                    sample_count: self.samples.as_ref().map_or(self.samples_per_user, |s| s[user]),
                });
            }
        }
        let plan = UserPartitionPlan {
            assignments,
            seed: self.seed.unwrap_or(fallback_seed),
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub clusters: usize,
    pub linkage: Linkage,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            linkage: Linkage::Average,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    /// Output width; defaults to the largest label seen.
    pub classes: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            classes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    #[default]
    DataSimilarity,
    /// Uniform random partition with the similarity assignment's cluster sizes.
    RandomClustering,
    /// Uniform random partition into non-empty clusters of any size.
    RandomUnconstrained,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub p_values: Vec<usize>,
    /// User index pairs to report; all pairs when absent.
    pub pairs: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub baseline: BaselineMode,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub partition: Option<PartitionConfig>,
    #[serde(default)]
    pub similarity: SimilarityParams,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
}

fn default_repetitions() -> usize {
    6
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative dataset paths resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(idx) = &mut self.dataset.idx {
            fix(&mut idx.images);
            fix(&mut idx.labels);
        }
        if let Some(f) = &mut self.dataset.features {
            f.files.iter_mut().for_each(fix);
        }
        if let Some(p) = &mut self.dataset.feature_pool {
            fix(&mut p.file);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset.count() {
            1 => {}
            n => {
                return Err(Error::Config(format!(
                    "exactly one [dataset.*] source is required, found {n}"
                )))
            }
        }
        if self.dataset.is_pooled() && self.partition.is_none() {
            return Err(Error::Config("pooled datasets need a [partition] table".into()));
        }
        if !self.dataset.is_pooled() && self.partition.is_some() {
            return Err(Error::Config("[partition] only applies to pooled datasets".into()));
        }
        if let Some(f) = &self.dataset.features {
            if f.files.is_empty() {
                return Err(Error::Config("features.files is empty".into()));
            }
            if f.tasks.as_ref().is_some_and(|t| t.len() != f.files.len()) {
                return Err(Error::Config("features.tasks must list one task per file".into()));
            }
        }
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.clustering.clusters < 1 {
            return Err(Error::Config("clustering.clusters must be >= 1".into()));
        }
        if self.similarity.keep < 1 || !(self.similarity.floor >= 0.0) {
            return Err(Error::Config("similarity.keep must be >= 1 and floor >= 0".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("model.hidden sizes must be positive".into()));
        }
        self.training.validate()
    }
}
