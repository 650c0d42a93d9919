use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::model::LayeredModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationScope {
    /// Every layer, as a local parameter server does.
    AllLayers,
    /// Only the anchor's common prefix, as the global server does.
    CommonPrefix,
}

/// Sample-weighted average of the in-scope layers. Layers outside the scope
/// are copied from `models[anchor]`.
///
/// Each output entry is clamped to the range of its inputs so the result is
/// an exact convex combination (a fixed point for identical models).
pub fn fedavg_aggregate(
    models: &[LayeredModel],
    sample_counts: &[usize],
    scope: AggregationScope,
    anchor: usize,
) -> Result<LayeredModel> {
    if models.is_empty() || models.len() != sample_counts.len() {
        return Err(Error::InvalidInput(format!(
            "{} models with {} sample counts",
            models.len(),
            sample_counts.len()
        )));
    }
    if sample_counts.contains(&0) {
        return Err(Error::InvalidInput("sample counts must be positive".into()));
    }
    let base = models.get(anchor).ok_or_else(|| {
        Error::InvalidInput(format!("anchor {anchor} out of {} models", models.len()))
    })?;
    let in_scope = match scope {
        AggregationScope::AllLayers => base.layers().len(),
        AggregationScope::CommonPrefix => base.common_prefix_len(),
    };
    for (m, model) in models.iter().enumerate() {
        if model.layers().len() < in_scope {
            return Err(Error::Incompatible {
                layer: model.layers().len(),
                detail: format!("model {m} has only {} layers", model.layers().len()),
            });
        }
        for l in 0..in_scope {
            let (a, b) = (base.layers()[l].shape(), model.layers()[l].shape());
            if a != b {
                return Err(Error::Incompatible {
                    layer: l,
                    detail: format!("model {m} has shape {b:?}, anchor has {a:?}"),
                });
            }
        }
    }

    let total: usize = sample_counts.iter().sum();
    let weights: Vec<f64> = sample_counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    let mut out = base.clone();
    for l in 0..in_scope {
        let layer = &mut out.layers_mut()[l];
        for (p, value) in layer.params_mut().enumerate() {
            let mut acc = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (model, w) in models.iter().zip(&weights) {
                let x = param_at(model, l, p);
                acc += w * x;
                lo = lo.min(x);
                hi = hi.max(x);
            }
            *value = acc.clamp(lo, hi);
        }
    }
    Ok(out)
}

fn param_at(model: &LayeredModel, layer: usize, index: usize) -> f64 {
    let layer = &model.layers()[layer];
    let w = layer.weights.len();
    if index < w {
        layer.weights.as_slice()[index]
    } else {
        layer.bias[index - w]
    }
}
