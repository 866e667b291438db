use super::check_layer;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{forward, logit_jacobian, softmax_hessian, MlpModel};

/// Largest Hessian side length assembled densely by default.
pub const DENSE_MAX_DIM: usize = 4096;

pub fn layerwise_dense(model: &MlpModel, data: &Dataset, p: usize, include_bias: bool) -> Result<Matrix> {
    layerwise_dense_with_cap(model, data, p, include_bias, DENSE_MAX_DIM)
}

/// Dense `E[M_x ⊗ x̃x̃ᵀ]`, assembled sample by sample from `G` and `A`.
pub fn layerwise_dense_with_cap(model: &MlpModel, data: &Dataset, p: usize, include_bias: bool, cap: usize) -> Result<Matrix> {
    check_layer(model, data, p)?;
    let (m, n) = model.layer_shape(p);
    let n_ext = n + include_bias as usize;
    let dim = m * n_ext;
    if dim > cap {
        return Err(Error::Capacity(format!(
            "layer {p} Hessian is {dim}×{dim}, above the dense cap of {cap}; use the operator path"
        )));
    }
    let mut h = Matrix::zeros(dim, dim);
    let inv = 1.0 / data.len() as f64;
    for s in 0..data.len() {
        let (x, y) = data.sample(s);
        let cache = forward(model, x, y)?;
        let g = logit_jacobian(model, &cache, p)?;
        let ms = g.t_matmul(&softmax_hessian(&cache.probs).matmul(&g));
        let mut xe = cache.layer_inputs[p].clone();
        if include_bias {
            xe.push(1.0);
        }
        for i in 0..m {
            for a in 0..n_ext {
                let row = h.row_mut(i * n_ext + a);
                for j in 0..m {
                    let coef = inv * ms[(i, j)] * xe[a];
                    for (hv, &xb) in row[j * n_ext..(j + 1) * n_ext].iter_mut().zip(&xe) {
                        *hv += coef * xb;
                    }
                }
            }
        }
    }
    Ok(h.symmetrize())
}
