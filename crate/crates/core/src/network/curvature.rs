use super::{MlpModel, SampleCache};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hessian of cross-entropy with respect to the logits, `diag(p) − p pᵀ`.
pub fn softmax_hessian(probs: &[f64]) -> Matrix {
    let c = probs.len();
    Matrix::from_fn(c, c, |i, j| {
        let d = if i == j { probs[i] } else { 0.0 };
        d - probs[i] * probs[j]
    })
}

/// Factor `Q = diag(√p)(I − 1 pᵀ)` with `QᵀQ = diag(p) − p pᵀ`.
pub fn q_factor(probs: &[f64]) -> Matrix {
    let c = probs.len();
    Matrix::from_fn(c, c, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        probs[i].sqrt() * (id - probs[j])
    })
}

/// `G^(p) = ∂z/∂z^(p) = W^(L−1) D^(L−2) ⋯ W^(p+1) D^(p)`, a `c × m_p` matrix;
/// the identity for the output layer.
pub fn logit_jacobian(model: &MlpModel, cache: &SampleCache, p: usize) -> Result<Matrix> {
    let l = model.num_layers();
    if p >= l {
        return Err(Error::Precondition(format!("layer {p} out of range (model has {l})")));
    }
    let mut g = Matrix::identity(model.num_classes());
    for q in ((p + 1)..l).rev() {
        g = g.matmul(model.weight(q));
        let mask = &cache.relu_masks[q - 1];
        for i in 0..g.rows() {
            for (v, m) in g.row_mut(i).iter_mut().zip(mask) {
                *v *= m;
            }
        }
    }
    Ok(g)
}
