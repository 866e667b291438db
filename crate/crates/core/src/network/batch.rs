//! Row-batched forward and backward passes.

use super::{relu_mask, softmax, MlpModel};
use crate::error::{Error, Result};
use crate::linalg::gemm::gemm_into;
use crate::linalg::Matrix;

/// Layer quantities for a batch, one sample per row.
#[derive(Clone, Debug)]
pub struct BatchForward {
    /// `x^(p)` stacked, `N × n_p`.
    pub layer_inputs: Vec<Matrix>,
    /// `z^(p)` stacked, `N × m_p`.
    pub pre_activations: Vec<Matrix>,
    /// Softmax of the logits, `N × c`.
    pub probs: Matrix,
}

pub fn forward_batch(model: &MlpModel, inputs: &Matrix) -> Result<BatchForward> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::Precondition(format!(
            "inputs have {} columns, model expects {}",
            inputs.cols(),
            model.input_dim()
        )));
    }
    let n = inputs.rows();
    let l = model.num_layers();
    let mut layer_inputs = Vec::with_capacity(l);
    let mut pre = Vec::with_capacity(l);
    let mut current = inputs.clone();
    for p in 0..l {
        let (m, _) = model.layer_shape(p);
        let mut z = Matrix::zeros(n, m);
        for i in 0..n {
            z.row_mut(i).copy_from_slice(model.bias(p));
        }
        gemm_into(1.0, &current, false, model.weight(p), true, 1.0, &mut z);
        layer_inputs.push(current);
        current = if p + 1 < l { z.map(|v| v.max(0.0)) } else { Matrix::zeros(0, 0) };
        pre.push(z);
    }
    let logits = pre.last().unwrap();
    let mut probs = Matrix::zeros(n, model.num_classes());
    for i in 0..n {
        probs.row_mut(i).copy_from_slice(&softmax(logits.row(i)));
    }
    Ok(BatchForward {
        layer_inputs,
        pre_activations: pre,
        probs,
    })
}

fn sample_loss(probs: &[f64], logits: &[f64], label: usize) -> f64 {
    let p = probs[label];
    if p > 0.0 {
        -p.ln()
    } else {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - logits[label]
    }
}

/// Mean cross-entropy over the rows `idx` and its flat gradient.
pub fn loss_and_grad_batch(model: &MlpModel, inputs: &Matrix, labels: &[usize], idx: &[usize]) -> Result<(f64, Vec<f64>)> {
    let x = inputs.select_rows(idx);
    let fw = forward_batch(model, &x)?;
    let n = idx.len();
    let inv = 1.0 / n as f64;
    let logits = fw.pre_activations.last().unwrap();
    let mut total = 0.0;
    let mut delta = fw.probs.clone();
    for (r, &i) in idx.iter().enumerate() {
        let y = labels[i];
        total += sample_loss(fw.probs.row(r), logits.row(r), y);
        delta[(r, y)] -= 1.0;
    }
    delta.scale_in_place(inv);
    let layout = model.layout();
    let mut out = vec![0.0; layout.total()];
    for p in (0..model.num_layers()).rev() {
        let xin = &fw.layer_inputs[p];
        let gw = delta.t_matmul(xin);
        let ncols = xin.cols();
        let block = layout.block_mut(p, &mut out);
        for i in 0..gw.rows() {
            let row = &mut block[i * (ncols + 1)..(i + 1) * (ncols + 1)];
            row[..ncols].copy_from_slice(gw.row(i));
            row[ncols] = (0..n).map(|r| delta[(r, i)]).sum();
        }
        if p > 0 {
            let mut back = delta.matmul(model.weight(p));
            let z = &fw.pre_activations[p - 1];
            for r in 0..n {
                let mask = relu_mask(z.row(r));
                for (b, m) in back.row_mut(r).iter_mut().zip(mask) {
                    *b *= m;
                }
            }
            delta = back;
        }
    }
    Ok((total * inv, out))
}

const CHUNK: usize = 2048;

/// Mean cross-entropy over all rows.
pub fn mean_loss(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for start in (0..labels.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(labels.len())).collect();
        let fw = forward_batch(model, &inputs.select_rows(&idx))?;
        let logits = fw.pre_activations.last().unwrap();
        for (r, &i) in idx.iter().enumerate() {
            total += sample_loss(fw.probs.row(r), logits.row(r), labels[i]);
        }
    }
    Ok(total / labels.len() as f64)
}

/// Fraction of rows whose arg-max logit differs from the label.
pub fn error_rate(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut wrong = 0usize;
    for start in (0..labels.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(labels.len())).collect();
        let fw = forward_batch(model, &inputs.select_rows(&idx))?;
        let logits = fw.pre_activations.last().unwrap();
        for (r, &i) in idx.iter().enumerate() {
            if super::argmax(logits.row(r)) != labels[i] {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, grad, loss};
    use crate::rng;

    #[test]
    fn batch_matches_per_sample() {
        let m = crate::network::tests::random_model(&[5, 4, 3, 3], 3);
        let mut r = rng::seeded(8);
        let x = Matrix::from_vec(7, 5, rng::normal_vec(&mut r, 35)).unwrap();
        let labels = vec![0, 1, 2, 0, 1, 2, 2];
        let idx: Vec<usize> = (0..7).collect();
        let (l, g) = loss_and_grad_batch(&m, &x, &labels, &idx).unwrap();
        let mut l_ref = 0.0;
        let mut g_ref = vec![0.0; m.num_params()];
        for i in 0..7 {
            let c = forward(&m, x.row(i), labels[i]).unwrap();
            l_ref += loss(&c) / 7.0;
            crate::linalg::vector::axpy(1.0 / 7.0, &grad(&m, &c), &mut g_ref);
        }
        assert!((l - l_ref).abs() < 1e-12);
        assert!(crate::linalg::vector::max_abs_diff(&g, &g_ref) < 1e-12);
        assert!((mean_loss(&m, &x, &labels).unwrap() - l_ref).abs() < 1e-12);
    }
}
