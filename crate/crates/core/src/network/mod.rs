//! Fully-connected ReLU classifiers with softmax cross-entropy.
//!
//! Layers are indexed from 0: layer `p` maps `x^(p) ∈ R^{n_p}` to
//! `z^(p) = W^(p) x^(p) + b^(p) ∈ R^{m_p}`, and `x^(p+1) = relu(z^(p))`.
//! The last layer's output is the logit vector.
//!
//! Flat parameter vectors store each layer as the row-major `m_p × (n_p + 1)`
//! matrix `[W^(p) | b^(p)]`, layers concatenated in order. This is the same
//! vectorization the bias-extended layer-wise Hessian acts on.

mod batch;
pub mod checkpoint;
mod curvature;
mod init;
mod train;

use serde::{Deserialize, Serialize};

use crate::datasets::one_hot;
use crate::error::{Error, Result};
use crate::linalg::vector::{axpy, dot};
use crate::linalg::Matrix;

pub use batch::{error_rate, forward_batch, loss_and_grad_batch, mean_loss, BatchForward};
pub use curvature::{logit_jacobian, q_factor, softmax_hessian};
pub use init::{init_gaussian_rowscaled, init_xavier, initializer, initializers, GaussianRowScaled, Initializer, Xavier};
pub use train::{train_sgd, TrainConfig, TrainOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Precondition("an MLP needs an input and an output width".into()));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Precondition(format!("zero width in {layer_dims:?}")));
    }
    Ok(())
}

impl MlpModel {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect();
        let biases = layer_dims[1..].iter().map(|&m| vec![0.0; m]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Dimension("one bias per weight matrix required".into()));
        }
        let mut dims = vec![weights[0].cols()];
        for (p, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *dims.last().unwrap() || b.len() != w.rows() {
                return Err(Error::Dimension(format!("layer {p} has inconsistent shapes")));
            }
            dims.push(w.rows());
        }
        check_dims(&dims)?;
        Ok(Self {
            layer_dims: dims,
            weights,
            biases,
        })
    }

    pub fn from_flat(layer_dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        model.set_flat(flat)?;
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// `(m_p, n_p)`
    pub fn layer_shape(&self, p: usize) -> (usize, usize) {
        self.weights[p].shape()
    }

    pub fn weight(&self, p: usize) -> &Matrix {
        &self.weights[p]
    }

    pub fn weight_mut(&mut self, p: usize) -> &mut Matrix {
        &mut self.weights[p]
    }

    pub fn bias(&self, p: usize) -> &[f64] {
        &self.biases[p]
    }

    pub fn bias_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.biases[p]
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.layer_dims)
    }

    pub fn num_params(&self) -> usize {
        self.layout().total()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for i in 0..w.rows() {
                out.extend_from_slice(w.row(i));
                out.push(b[i]);
            }
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let layout = self.layout();
        if flat.len() != layout.total() {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} entries, model needs {}",
                flat.len(),
                layout.total()
            )));
        }
        for p in 0..self.num_layers() {
            let block = layout.block(p, flat);
            let n = self.weights[p].cols();
            for i in 0..self.weights[p].rows() {
                let row = &block[i * (n + 1)..(i + 1) * (n + 1)];
                self.weights[p].row_mut(i).copy_from_slice(&row[..n]);
                self.biases[p][i] = row[n];
            }
        }
        Ok(())
    }

    /// `θ ← θ + alpha · delta` for a flat `delta`.
    pub fn add_flat(&mut self, alpha: f64, delta: &[f64]) {
        let layout = self.layout();
        assert_eq!(delta.len(), layout.total(), "add_flat length");
        for p in 0..self.num_layers() {
            let block = layout.block(p, delta);
            let n = self.weights[p].cols();
            for i in 0..self.weights[p].rows() {
                let row = &block[i * (n + 1)..(i + 1) * (n + 1)];
                axpy(alpha, &row[..n], self.weights[p].row_mut(i));
                self.biases[p][i] += alpha * row[n];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

/// Offsets of each layer's `[W | b]` block inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl ParamLayout {
    pub fn new(layer_dims: &[usize]) -> Self {
        let shapes: Vec<(usize, usize)> = layer_dims.windows(2).map(|w| (w[1], w[0] + 1)).collect();
        let mut offsets = Vec::with_capacity(shapes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &(m, n1) in &shapes {
            acc += m * n1;
            offsets.push(acc);
        }
        Self { shapes, offsets }
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    /// `(m_p, n_p + 1)`, the shape of the extended block.
    pub fn shape(&self, p: usize) -> (usize, usize) {
        self.shapes[p]
    }

    pub fn range(&self, p: usize) -> std::ops::Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn block<'a>(&self, p: usize, flat: &'a [f64]) -> &'a [f64] {
        &flat[self.range(p)]
    }

    pub fn block_mut<'a>(&self, p: usize, flat: &'a mut [f64]) -> &'a mut [f64] {
        &mut flat[self.range(p)]
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }
}

/// Forward-pass artifacts for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCache {
    /// `x^(p)` for every layer; `layer_inputs[0]` is the raw input.
    pub layer_inputs: Vec<Vec<f64>>,
    /// `z^(p)` for every layer; the last entry holds the logits.
    pub pre_activations: Vec<Vec<f64>>,
    /// `1[z^(p) > 0]` for the hidden layers.
    pub relu_masks: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub label: usize,
}

impl SampleCache {
    pub fn logits(&self) -> &[f64] {
        self.pre_activations.last().unwrap()
    }
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn relu_mask(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
}

pub fn forward(model: &MlpModel, x: &[f64], label: usize) -> Result<SampleCache> {
    if x.len() != model.input_dim() {
        return Err(Error::Precondition(format!(
            "input has length {}, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if label >= model.num_classes() {
        return Err(Error::Precondition(format!("label {label} outside the model's classes")));
    }
    let l = model.num_layers();
    let mut layer_inputs = Vec::with_capacity(l);
    let mut pre = Vec::with_capacity(l);
    let mut masks = Vec::with_capacity(l - 1);
    let mut current = x.to_vec();
    for p in 0..l {
        let mut z = model.weight(p).matvec(&current);
        axpy(1.0, model.bias(p), &mut z);
        layer_inputs.push(current);
        if p + 1 < l {
            masks.push(relu_mask(&z));
            current = z.iter().map(|&v| v.max(0.0)).collect();
        } else {
            current = Vec::new();
        }
        pre.push(z);
    }
    let probs = softmax(pre.last().unwrap());
    Ok(SampleCache {
        layer_inputs,
        pre_activations: pre,
        relu_masks: masks,
        probs,
        label,
    })
}

/// Cross-entropy `−log p_label`.
pub fn loss(cache: &SampleCache) -> f64 {
    let p = cache.probs[cache.label];
    if p > 0.0 {
        -p.ln()
    } else {
        let z = cache.logits();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - z[cache.label]
    }
}

/// Gradient of the sample loss as a flat parameter vector.
pub fn grad(model: &MlpModel, cache: &SampleCache) -> Vec<f64> {
    let layout = model.layout();
    let mut out = vec![0.0; layout.total()];
    let y = one_hot(cache.label, model.num_classes());
    let mut delta: Vec<f64> = cache.probs.iter().zip(&y).map(|(p, y)| p - y).collect();
    for p in (0..model.num_layers()).rev() {
        let x = &cache.layer_inputs[p];
        let n = x.len();
        let block = layout.block_mut(p, &mut out);
        for (i, &d) in delta.iter().enumerate() {
            let row = &mut block[i * (n + 1)..(i + 1) * (n + 1)];
            for (r, &xj) in row[..n].iter_mut().zip(x) {
                *r = d * xj;
            }
            row[n] = d;
        }
        if p > 0 {
            let back = model.weight(p).t_matvec(&delta);
            delta = back.iter().zip(&cache.relu_masks[p - 1]).map(|(b, m)| b * m).collect();
        }
    }
    out
}

/// Mean cross-entropy over `data`, evaluated one sample at a time.
pub fn dataset_loss(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += loss(&forward(model, inputs.row(i), y)?);
    }
    Ok(total / labels.len() as f64)
}

/// Logit index with the largest value (lowest index on ties).
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[doc(hidden)]
pub fn flat_dot(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}
