//! Seeded Gaussian multi-task data.
//!
//! Task `t` has mean `(separation / sqrt 2) * e_t`, so every pair of task
//! means is `separation` apart, and a task-specific orthonormal subspace that
//! carries most of its variance. Classes inside a task are offsets within
//! that subspace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub users_per_task: Vec<usize>,
    pub samples_per_user: usize,
    pub dim: usize,
    /// Distance between any two task means.
    pub separation: f64,
    /// Dimension of each task's principal subspace.
    pub rank: usize,
    /// Standard deviation along the leading subspace direction; later
    /// directions decay geometrically.
    pub spread: f64,
    /// Isotropic noise standard deviation.
    pub noise: f64,
    /// Half distance between the two class means of a task.
    pub class_offset: f64,
    /// Every task uses task 0's subspace.
    pub shared_covariance: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            users_per_task: vec![5, 5],
            samples_per_user: 100,
            dim: 20,
            separation: 5.0,
            rank: 3,
            spread: 1.0,
            noise: 0.1,
            class_offset: 1.0,
            shared_covariance: false,
            seed: 0,
        }
    }
}

/// Geometric decay of per-direction scale inside a task subspace.
const SPREAD_DECAY: f64 = 0.75;

pub(crate) struct TaskGeometry {
    pub mean: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub scales: Vec<f64>,
}

pub(crate) fn task_geometry(
    task: usize,
    dim: usize,
    rank: usize,
    separation: f64,
    spread: f64,
    basis_task: usize,
    seed: u64,
) -> TaskGeometry {
    let mut mean = DVector::zeros(dim);
    mean[task] = separation / std::f64::consts::SQRT_2;
    let mut rng = rng_for(&[seed, 0xBA515, basis_task as u64]);
    let gaussian = DMatrix::from_fn(dim, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let basis = gaussian.qr().q();
    let scales = (0..rank).map(|r| spread * SPREAD_DECAY.powi(r as i32)).collect();
    TaskGeometry { mean, basis, scales }
}

impl TaskGeometry {
    pub(crate) fn sample(&self, offset: &DVector<f64>, noise: f64, rng: &mut impl Rng) -> DVector<f64> {
        let rank = self.scales.len();
        let latent = DVector::from_fn(rank, |r, _| self.scales[r] * rng.sample::<f64, _>(StandardNormal));
        let mut x = &self.mean + &self.basis * (latent + offset);
        for v in x.iter_mut() {
            *v += noise * rng.sample::<f64, _>(StandardNormal);
        }
        x
    }
}

pub(crate) fn check_geometry(tasks: usize, dim: usize, rank: usize, separation: f64) -> Result<()> {
    if tasks == 0 {
        return Err(Error::InvalidInput("need at least one task".into()));
    }
    if dim < tasks || rank == 0 || rank > dim {
        return Err(Error::InvalidInput(format!(
            "dim {dim} must be >= tasks {tasks} and rank {rank} in 1..=dim"
        )));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::InvalidInput(format!("separation must be >= 0, got {separation}")));
    }
    Ok(())
}

/// One [`FeatureMatrix`] per user; users are numbered task by task. Task `t`
/// uses labels `2t + 1` and `2t + 2`, alternating per sample.
pub fn synth_tasks(spec: &SynthSpec) -> Result<Vec<FeatureMatrix>> {
    let tasks = spec.users_per_task.len();
    check_geometry(tasks, spec.dim, spec.rank, spec.separation)?;
    if spec.samples_per_user == 0 {
        return Err(Error::InvalidInput("samples_per_user must be >= 1".into()));
    }
    let mut users = Vec::new();
    let mut user_id = 0u32;
    for (t, &count) in spec.users_per_task.iter().enumerate() {
        let basis_task = if spec.shared_covariance { 0 } else { t };
        let geometry = task_geometry(t, spec.dim, spec.rank, spec.separation, spec.spread, basis_task, spec.seed);
        let mut offsets = [DVector::zeros(spec.rank), DVector::zeros(spec.rank)];
        offsets[0][0] = spec.class_offset;
        offsets[1][0] = -spec.class_offset;
        for _ in 0..count {
            let mut rng = rng_for(&[spec.seed, 0x5A3B, user_id as u64]);
            let mut data = DMatrix::zeros(spec.samples_per_user, spec.dim);
            let mut labels = Vec::with_capacity(spec.samples_per_user);
            for i in 0..spec.samples_per_user {
                let class = i % 2;
                data.set_row(i, &geometry.sample(&offsets[class], spec.noise, &mut rng).transpose());
                labels.push((2 * t + class + 1) as u16);
            }
            users.push(FeatureMatrix::new(user_id, data, Some(labels))?);
            user_id += 1;
        }
    }
    Ok(users)
}

/// Planted task index of every user produced by [`synth_tasks`].
pub fn planted_tasks(users_per_task: &[usize]) -> Vec<usize> {
    users_per_task
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat_n(t, c))
        .collect()
}

/// Labelled pool with several classes per task, for carving into users with
/// [`crate::data::partition_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSpec {
    /// Classes belonging to each task. Labels must cover `1..=C` once.
    pub task_classes: Vec<Vec<u16>>,
    pub samples_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub rank: usize,
    pub spread: f64,
    pub noise: f64,
    /// Distance of each class mean from its task mean, inside the task
    /// subspace.
    pub class_offset: f64,
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        // clothing / footwear / bags grouping of the ten Fashion-MNIST labels
        Self {
            task_classes: vec![vec![1, 2, 3, 4, 5, 7], vec![6, 8, 10], vec![9]],
            samples_per_class: 600,
            dim: 784,
            separation: 4.0,
            rank: 8,
            spread: 1.0,
            noise: 0.3,
            class_offset: 1.5,
            seed: 0,
        }
    }
}

pub fn synth_pool(spec: &PoolSpec) -> Result<FeatureMatrix> {
    let tasks = spec.task_classes.len();
    check_geometry(tasks, spec.dim, spec.rank, spec.separation)?;
    let mut all: Vec<u16> = spec.task_classes.iter().flatten().copied().collect();
    all.sort_unstable();
    if all.is_empty() || all.iter().enumerate().any(|(i, &c)| c as usize != i + 1) {
        return Err(Error::InvalidInput(format!(
            "task classes must cover 1..=C exactly once, got {:?}",
            spec.task_classes
        )));
    }
    if spec.samples_per_class == 0 {
        return Err(Error::InvalidInput("samples_per_class must be >= 1".into()));
    }
    let n = all.len() * spec.samples_per_class;
    let mut data = DMatrix::zeros(n, spec.dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (t, classes) in spec.task_classes.iter().enumerate() {
        let geometry = task_geometry(t, spec.dim, spec.rank, spec.separation, spec.spread, t, spec.seed);
        for &class in classes {
            let mut rng = rng_for(&[spec.seed, 0xC1A55, class as u64]);
            let direction = DVector::from_fn(spec.rank, |_, _| rng.sample::<f64, _>(StandardNormal));
            let offset = direction.normalize() * spec.class_offset;
            for _ in 0..spec.samples_per_class {
                data.set_row(row, &geometry.sample(&offset, spec.noise, &mut rng).transpose());
                labels.push(class);
                row += 1;
            }
        }
    }
    FeatureMatrix::new(0, data, Some(labels))
}
