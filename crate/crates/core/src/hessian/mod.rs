//! Layer-wise Hessians of the cross-entropy loss and their Kronecker factors.
//!
//! For layer `p` the Hessian with respect to the (optionally bias-extended)
//! weights is `E[M_x ⊗ x̃x̃ᵀ]` with `M_x = Gᵀ A G`. Writing
//! `A = QᵀQ`, each sample contributes the `c × m` factor `N_x = Q G`, so
//! `M_x = N_xᵀ N_x`; everything here is built from those stacked factors.
//! Only the Gauss–Newton (G) term is formed: for a single ReLU layer the
//! curvature-of-logits term vanishes identically.

mod closed_form;
mod dense;
mod full;
mod kron;
mod operator;

use serde::Serialize;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::gemm::gemm_into;
use crate::linalg::{eigensolver, EigPairs, EigenSolver, Matrix};
use crate::network::{forward_batch, q_factor, BatchForward, MlpModel};
use crate::parallel;

pub use closed_form::{closed_form_output_hessian, expected_softmax_hessian, s_matrix, uniform_softmax_hessian};
pub use dense::{layerwise_dense, layerwise_dense_with_cap, DENSE_MAX_DIM};
pub use full::{full_gterm_operator, full_hessian_approx, FullGTermOperator, FullHessianApprox, FULL_MAX_OUTPUTS};
pub use kron::{kron_approx_spectrum, KronSpectrum};
pub use operator::{layerwise_hvp_operator, LayerHessianOperator};

/// Samples per work unit for empirical expectations.
pub(crate) const CHUNK: usize = 256;

#[derive(Clone, Debug, Serialize)]
pub struct LayerFactors {
    pub layer: usize,
    pub include_bias: bool,
    /// `E[M]`, `m × m`.
    pub output_hessian: Matrix,
    /// `E[x̃x̃ᵀ]`.
    pub input_autocorr: Matrix,
    /// `E[x̃]`.
    pub input_mean: Vec<f64>,
    pub out_eig: EigPairs,
    pub in_eig: EigPairs,
}

impl LayerFactors {
    pub fn out_dim(&self) -> usize {
        self.output_hessian.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.input_autocorr.rows()
    }
}

pub(crate) fn check_layer(model: &MlpModel, data: &Dataset, p: usize) -> Result<()> {
    if p >= model.num_layers() {
        return Err(Error::Precondition(format!(
            "layer {p} out of range: model has {} layers",
            model.num_layers()
        )));
    }
    if data.is_empty() {
        return Err(Error::Precondition("empty dataset".into()));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset inputs have {} features, model expects {}",
            data.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Appends a column of ones when `include_bias`.
pub fn extend_inputs(x: &Matrix, include_bias: bool) -> Matrix {
    if !include_bias {
        return x.clone();
    }
    let n = x.cols();
    Matrix::from_fn(x.rows(), n + 1, |i, j| if j < n { x[(i, j)] } else { 1.0 })
}

/// `Q_x G_x^(p)` for `p = from..L` (index `p − from`) for row `row` of a
/// batched forward pass.
pub(crate) fn sample_factors(model: &MlpModel, fw: &BatchForward, row: usize, from: usize) -> Vec<Matrix> {
    let l = model.num_layers();
    let mut n = q_factor(fw.probs.row(row));
    let mut out = Vec::with_capacity(l - from);
    out.push(n.clone());
    for q in ((from + 1)..l).rev() {
        n = n.matmul(model.weight(q));
        let z = fw.pre_activations[q - 1].row(row);
        for i in 0..n.rows() {
            for (v, &zj) in n.row_mut(i).iter_mut().zip(z) {
                if zj <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        out.push(n.clone());
    }
    out.reverse();
    out
}

/// Stacked `N_x` factors of layer `p` for a batch: `(rows · c) × m_p`.
pub(crate) fn stacked_factor(model: &MlpModel, fw: &BatchForward, p: usize) -> Matrix {
    let c = model.num_classes();
    let (m, _) = model.layer_shape(p);
    let rows = fw.probs.rows();
    let mut b = Matrix::zeros(rows * c, m);
    for r in 0..rows {
        let n = sample_factors(model, fw, r, p).swap_remove(0);
        b.as_mut_slice()[r * c * m..(r + 1) * c * m].copy_from_slice(n.as_slice());
    }
    b
}

struct Moments {
    output: Matrix,
    autocorr: Matrix,
    sum: Vec<f64>,
}

fn add_moments(mut a: Moments, b: Moments) -> Moments {
    a.output.add_scaled(1.0, &b.output);
    a.autocorr.add_scaled(1.0, &b.autocorr);
    crate::linalg::vector::axpy(1.0, &b.sum, &mut a.sum);
    a
}

/// `(E[M^(p)], E[x̃x̃ᵀ], E[x̃])` over the dataset.
pub fn layer_moments(model: &MlpModel, data: &Dataset, p: usize, include_bias: bool) -> Result<(Matrix, Matrix, Vec<f64>)> {
    check_layer(model, data, p)?;
    let (m, n) = model.layer_shape(p);
    let n_ext = n + include_bias as usize;
    let total = parallel::map_reduce(
        data.len(),
        CHUNK,
        |range| -> Result<Moments> {
            let idx: Vec<usize> = range.collect();
            let fw = forward_batch(model, &data.inputs.select_rows(&idx))?;
            let b = stacked_factor(model, &fw, p);
            let mut output = Matrix::zeros(m, m);
            gemm_into(1.0, &b, true, &b, false, 0.0, &mut output);
            let x = extend_inputs(&fw.layer_inputs[p], include_bias);
            let mut autocorr = Matrix::zeros(n_ext, n_ext);
            gemm_into(1.0, &x, true, &x, false, 0.0, &mut autocorr);
            let sum = (0..n_ext).map(|j| (0..x.rows()).map(|i| x[(i, j)]).sum()).collect();
            Ok(Moments { output, autocorr, sum })
        },
        |a, b| match (a, b) {
            (Ok(a), Ok(b)) => Ok(add_moments(a, b)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
    )
    .expect("nonempty dataset")?;
    let inv = 1.0 / data.len() as f64;
    Ok((
        total.output.scale(inv).symmetrize(),
        total.autocorr.scale(inv).symmetrize(),
        total.sum.iter().map(|v| v * inv).collect(),
    ))
}

/// `E[M^(p)]` alone.
pub fn output_hessian(model: &MlpModel, data: &Dataset, p: usize) -> Result<Matrix> {
    Ok(layer_moments(model, data, p, false)?.0)
}

pub fn layer_factors(model: &MlpModel, data: &Dataset, p: usize, include_bias: bool) -> Result<LayerFactors> {
    layer_factors_with(model, data, p, include_bias, eigensolver("auto")?.as_ref())
}

pub fn layer_factors_with(
    model: &MlpModel,
    data: &Dataset,
    p: usize,
    include_bias: bool,
    solver: &dyn EigenSolver,
) -> Result<LayerFactors> {
    let (output_hessian, input_autocorr, input_mean) = layer_moments(model, data, p, include_bias)?;
    let out_eig = solver.solve(&output_hessian)?;
    let in_eig = solver.solve(&input_autocorr)?;
    Ok(LayerFactors {
        layer: p,
        include_bias,
        output_hessian,
        input_autocorr,
        input_mean,
        out_eig,
        in_eig,
    })
}
