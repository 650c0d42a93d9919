use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fl::model::LayeredModel;
use crate::rng::rng_for;

/// How the global server weights each cluster's shared layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpsWeighting {
    #[default]
    SampleCount,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub global_rounds: usize,
    pub local_epochs_per_round: usize,
    /// FedAvg rounds each LPS runs between two global aggregations.
    pub lps_rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub common_prefix_len: usize,
    /// Fraction of each user's samples held out for evaluation.
    pub eval_fraction: f64,
    pub gps_weighting: GpsWeighting,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            global_rounds: 10,
            local_epochs_per_round: 1,
            lps_rounds: 1,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            common_prefix_len: 1,
            eval_fraction: 0.2,
            gps_weighting: GpsWeighting::SampleCount,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("training: {m}")));
        if self.global_rounds < 1 {
            return fail("global_rounds must be >= 1");
        }
        if self.local_epochs_per_round < 1 || self.lps_rounds < 1 {
            return fail("local_epochs_per_round and lps_rounds must be >= 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1");
        }
        // zero is allowed as the identity update
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return fail("eval_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Zero-based class targets; labels must lie in `1..=classes`.
pub(crate) fn targets(data: &FeatureMatrix, classes: usize) -> Result<Vec<usize>> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data(format!("user {} has no labels", data.user_id())))?;
    labels
        .iter()
        .map(|&l| {
            if l == 0 || l as usize > classes {
                Err(Error::Data(format!(
                    "user {}: label {l} outside 1..={classes}",
                    data.user_id()
                )))
            } else {
                Ok(l as usize - 1)
            }
        })
        .collect()
}

/// Result of one user's local update.
#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub model: LayeredModel,
    /// Mean batch loss over the final epoch.
    pub loss: f64,
}

/// Mini-batch SGD on the negative log likelihood. The shuffling stream is
/// keyed by `(config.seed, round, user)`.
pub fn local_train(
    model: &LayeredModel,
    user_data: &FeatureMatrix,
    config: &TrainingConfig,
    round: usize,
) -> Result<LayeredModel> {
    local_update(model, user_data, config, round, 0).map(|u| u.model)
}

pub(crate) fn local_update(
    model: &LayeredModel,
    user_data: &FeatureMatrix,
    config: &TrainingConfig,
    round: usize,
    lps_round: usize,
) -> Result<LocalUpdate> {
    if user_data.dim() != model.input_dim() {
        return Err(Error::Data(format!(
            "user {} has {} features, model expects {}",
            user_data.user_id(),
            user_data.dim(),
            model.input_dim()
        )));
    }
    let batch_size = config.batch_size.max(1);
    let targets = targets(user_data, model.classes())?;
    let x = user_data.data();
    let n = x.nrows();

    let mut rng = rng_for(&[
        config.seed,
        0x7EA1,
        round as u64,
        lps_round as u64,
        user_data.user_id() as u64,
    ]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut model = model.clone();
    let mut epoch_loss = 0.0;

    for _ in 0..config.local_epochs_per_round {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: DMatrix<f64> = x.select_rows(chunk);
            let batch_targets: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grads) = model.loss_and_gradient(&batch, &batch_targets);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    round,
                    detail: format!("user {} loss is {loss}", user_data.user_id()),
                });
            }
            total += loss;
            batches += 1;
            for (layer, grad) in model.layers_mut().iter_mut().zip(&grads) {
                for (w, g) in layer.params_mut().zip(grad.params()) {
                    *w -= config.learning_rate * g;
                }
            }
        }
        epoch_loss = total / batches as f64;
    }
    if model.layers().iter().any(|l| l.params().any(|v| !v.is_finite())) {
        return Err(Error::Divergence {
            round,
            detail: format!("user {} weights became non-finite", user_data.user_id()),
        });
    }
    Ok(LocalUpdate {
        model,
        loss: epoch_loss,
    })
}

/// Mean negative log likelihood and accuracy on labelled data.
pub fn evaluate(model: &LayeredModel, data: &FeatureMatrix) -> Result<(f64, f64)> {
    let targets = targets(data, model.classes())?;
    let log_probs = model.log_probs(data.data());
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, row) in log_probs.row_iter().enumerate() {
        loss -= row[targets[i]];
        let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
        if best == targets[i] {
            correct += 1;
        }
    }
    let n = targets.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Seeded train/eval split of one user's samples. At least one sample always
/// stays in the training part.
pub fn split_train_eval(
    data: &FeatureMatrix,
    eval_fraction: f64,
    seed: u64,
) -> Result<(FeatureMatrix, Option<FeatureMatrix>)> {
    let n = data.samples();
    let held_out = ((eval_fraction * n as f64).round() as usize).min(n - 1);
    if held_out == 0 {
        return Ok((data.clone(), None));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(&[seed, 0xE7A1, data.user_id() as u64]));
    let (eval_idx, train_idx) = order.split_at(held_out);
    let mut train_idx = train_idx.to_vec();
    let mut eval_idx = eval_idx.to_vec();
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    Ok((data.select_rows(&train_idx)?, Some(data.select_rows(&eval_idx)?)))
}
