use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{forward_batch, softmax_hessian, MlpModel};

/// `S^(p) = W^(L−1) ⋯ W^(p+1)`, the linear map from `z^(p)` to the logits
/// with all ReLU masks removed; the identity for the output layer.
pub fn s_matrix(model: &MlpModel, p: usize) -> Result<Matrix> {
    let l = model.num_layers();
    if p >= l {
        return Err(Error::Precondition(format!("layer {p} out of range (model has {l})")));
    }
    if p + 1 == l {
        return Ok(Matrix::identity(model.num_classes()));
    }
    let mut s = model.weight(l - 1).clone();
    for q in ((p + 1)..(l - 1)).rev() {
        s = s.matmul(model.weight(q));
    }
    Ok(s)
}

/// `4^{−h} Sᵀ Ã S` where `h` counts the ReLU layers between `z^(p)` and the
/// logits.
pub fn closed_form_output_hessian(model: &MlpModel, p: usize, a_tilde: &Matrix) -> Result<Matrix> {
    let c = model.num_classes();
    if a_tilde.shape() != (c, c) {
        return Err(Error::Dimension(format!("A_tilde is {:?}, expected {c}×{c}", a_tilde.shape())));
    }
    let s = s_matrix(model, p)?;
    let hops = (model.num_layers() - 1 - p) as i32;
    Ok(s.t_matmul(&a_tilde.matmul(&s)).scale(0.25f64.powi(hops)).symmetrize())
}

/// `E[A]` over the dataset.
pub fn expected_softmax_hessian(model: &MlpModel, data: &Dataset) -> Result<Matrix> {
    super::check_layer(model, data, 0)?;
    let c = model.num_classes();
    let mut acc = Matrix::zeros(c, c);
    for range in crate::parallel::chunk_ranges(data.len(), super::CHUNK) {
        let idx: Vec<usize> = range.collect();
        let fw = forward_batch(model, &data.inputs.select_rows(&idx))?;
        for r in 0..idx.len() {
            acc.add_scaled(1.0, &softmax_hessian(fw.probs.row(r)));
        }
    }
    Ok(acc.scale(1.0 / data.len() as f64))
}

/// `A` at uniform probabilities, `I/c − 11ᵀ/c²`.
pub fn uniform_softmax_hessian(c: usize) -> Matrix {
    softmax_hessian(&vec![1.0 / c as f64; c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::tests::toy;
    use crate::linalg::sym_eig_dense;

    #[test]
    fn s_matrix_cases() {
        let (model, _) = toy(&[5, 4, 3, 2], 1, 14);
        assert_eq!(s_matrix(&model, 1).unwrap(), *model.weight(2));
        assert_eq!(s_matrix(&model, 2).unwrap(), Matrix::identity(2));
        let reversed = model.weight(2).matmul(model.weight(1));
        assert!(s_matrix(&model, 0).unwrap().max_abs_diff(&reversed) < 1e-12);
        let id = crate::network::MlpModel::from_parts(vec![Matrix::identity(3); 3], vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(s_matrix(&id, 0).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn closed_form_rank_and_two_layer_case() {
        let (model, _) = toy(&[6, 8, 4], 1, 15);
        let a = uniform_softmax_hessian(4);
        let m = closed_form_output_hessian(&model, 0, &a).unwrap();
        let w2 = model.weight(1);
        assert!(m.max_abs_diff(&w2.t_matmul(&a.matmul(w2)).scale(0.25)) < 1e-14);
        let ev = sym_eig_dense(&m).unwrap().values;
        assert!(ev[3].abs() <= 1e-10 * ev[0]);
    }
}
