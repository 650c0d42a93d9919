use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Fully connected layer, `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::InvalidInput(format!(
                "layer has {} outputs but {} biases",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("layer has non-finite weights".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weights.shape()
    }

    /// Weights then bias, as one flat sequence.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Dense network with ReLU hidden activations and a log-softmax output.
///
/// The first `common_prefix_len` layers are the shared representation; the
/// rest are task specific.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    layers: Vec<DenseLayer>,
    common_prefix_len: usize,
}

impl LayeredModel {
    pub fn new(layers: Vec<DenseLayer>, common_prefix_len: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("model needs at least one layer".into()));
        }
        if common_prefix_len > layers.len() {
            return Err(Error::InvalidInput(format!(
                "common prefix {common_prefix_len} exceeds {} layers",
                layers.len()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::InvalidInput(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self {
            layers,
            common_prefix_len,
        })
    }

    /// Seeded MLP with `sizes = [input, hidden.., classes]`; weights and
    /// biases uniform in `±1/sqrt(fan_in)`.
    pub fn mlp(sizes: &[usize], common_prefix_len: usize, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = rng_for(&[seed, 0x1417]);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weights = DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound));
                let bias = DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound));
                DenseLayer { weights, bias }
            })
            .collect();
        Self::new(layers, common_prefix_len)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn common_prefix_len(&self) -> usize {
        self.common_prefix_len
    }

    pub fn with_common_prefix(mut self, len: usize) -> Result<Self> {
        if len > self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "common prefix {len} exceeds {} layers",
                self.layers.len()
            )));
        }
        self.common_prefix_len = len;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn affine(layer: &DenseLayer, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = input * layer.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += layer.bias.transpose();
        }
        z
    }

    /// Pre-activations of every layer for a batch (`b x in`).
    fn forward_all(&self, input: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let last = self.layers.len() - 1;
        let mut activations = vec![input.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, activations.last().unwrap());
            if l < last {
                activations.push(z.map(|v| v.max(0.0)));
            }
            pre.push(z);
        }
        (activations, pre)
    }

    /// Row-wise log-softmax outputs, `b x classes`.
    pub fn log_probs(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let (_, mut pre) = self.forward_all(input);
        let mut logits = pre.pop().unwrap();
        log_softmax_rows(&mut logits);
        logits
    }

    /// Mean negative log likelihood and its gradient. `targets` are
    /// zero-based class indices.
    pub fn loss_and_gradient(&self, input: &DMatrix<f64>, targets: &[usize]) -> (f64, Vec<DenseLayer>) {
        let b = input.nrows();
        let (activations, pre) = self.forward_all(input);
        let mut delta = pre.last().unwrap().clone();
        log_softmax_rows(&mut delta);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            loss -= delta[(i, t)];
        }
        loss /= b as f64;

        // softmax - onehot, averaged over the batch
        delta.apply(|v| *v = v.exp());
        for (i, &t) in targets.iter().enumerate() {
            delta[(i, t)] -= 1.0;
        }
        delta /= b as f64;

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let weights = delta.transpose() * &activations[l];
            let bias = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if l > 0 {
                let mut back = &delta * &self.layers[l].weights;
                back.zip_apply(&pre[l - 1], |g, z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(DenseLayer { weights, bias });
        }
        grads.reverse();
        (loss, grads)
    }

    /// Predicted zero-based class per row.
    pub fn predict(&self, input: &DMatrix<f64>) -> Vec<usize> {
        self.log_probs(input)
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

fn log_softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.add_scalar_mut(-lse);
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    /// row-major `outputs x inputs`
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    common_prefix_len: usize,
    layers: Vec<LayerRecord>,
}

impl Serialize for LayeredModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ModelRecord {
            common_prefix_len: self.common_prefix_len,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    weights: l.weights.transpose().iter().copied().collect(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LayeredModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = ModelRecord::deserialize(deserializer)?;
        let layers = rec
            .layers
            .into_iter()
            .map(|l| {
                if l.weights.len() != l.inputs * l.outputs {
                    return Err(D::Error::custom("weight count does not match layer shape"));
                }
                DenseLayer::new(
                    DMatrix::from_row_slice(l.outputs, l.inputs, &l.weights),
                    DVector::from_vec(l.bias),
                )
                .map_err(D::Error::custom)
            })
            .collect::<Result<Vec<_>, _>>()?;
        LayeredModel::new(layers, rec.common_prefix_len).map_err(D::Error::custom)
    }
}
