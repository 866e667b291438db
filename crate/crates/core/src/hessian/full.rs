use serde::Serialize;

use super::{check_layer, extend_inputs, sample_factors, CHUNK};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::gemm::gemm_into;
use crate::linalg::vector::{axpy, dot, norm};
use crate::linalg::{eigensolver, kron_vec, LinearOperator, Matrix};
use crate::network::{forward_batch, MlpModel};
use crate::parallel;

/// Largest total pre-activation width for the dense full output Hessian.
pub const FULL_MAX_OUTPUTS: usize = 2000;

#[derive(Clone, Debug, Serialize)]
pub struct FullHessianApprox {
    /// `σ_i ‖w_i‖²`, descending.
    pub values: Vec<f64>,
    /// Orthonormal columns over the flat parameter layout.
    pub vectors: Matrix,
}

fn total_outputs(model: &MlpModel) -> Result<usize> {
    let total: usize = model.layer_dims()[1..].iter().sum();
    if total > FULL_MAX_OUTPUTS {
        return Err(Error::Capacity(format!(
            "full output Hessian would be {total}×{total}, above {FULL_MAX_OUTPUTS}"
        )));
    }
    Ok(total)
}

/// Concatenated `[N^(0) … N^(L−1)]` for each row of a batch, stacked.
fn stacked_full(model: &MlpModel, fw: &crate::network::BatchForward, total: usize) -> Matrix {
    let c = model.num_classes();
    let rows = fw.probs.rows();
    let mut b = Matrix::zeros(rows * c, total);
    for r in 0..rows {
        let parts = sample_factors(model, fw, r, 0);
        for a in 0..c {
            let dst = b.row_mut(r * c + a);
            let mut off = 0;
            for part in &parts {
                let w = part.cols();
                dst[off..off + w].copy_from_slice(part.row(a));
                off += w;
            }
        }
    }
    b
}

/// Approximate top eigenpairs of the full-parameter Hessian.
///
/// The full output Hessian over all pre-activations is eigendecomposed;
/// each eigenvector `u_i` is lifted to parameter space layer by layer as
/// `u_i^(p) ⊗ E[x̃^(p)]`, scored by `σ_i ‖w_i‖²` (before normalization), and
/// the lifted vectors are Gram–Schmidt orthonormalized in score order.
pub fn full_hessian_approx(model: &MlpModel, data: &Dataset, k: usize) -> Result<FullHessianApprox> {
    check_layer(model, data, 0)?;
    let total = total_outputs(model)?;
    if k == 0 || k > total {
        return Err(Error::Precondition(format!("k = {k} outside [1, {total}]")));
    }
    let l = model.num_layers();
    let (gram, sums) = parallel::map_reduce(
        data.len(),
        CHUNK,
        |range| -> Result<(Matrix, Vec<Vec<f64>>)> {
            let idx: Vec<usize> = range.collect();
            let fw = forward_batch(model, &data.inputs.select_rows(&idx))?;
            let b = stacked_full(model, &fw, total);
            let mut g = Matrix::zeros(total, total);
            gemm_into(1.0, &b, true, &b, false, 0.0, &mut g);
            let sums = (0..l)
                .map(|p| {
                    let x = extend_inputs(&fw.layer_inputs[p], true);
                    (0..x.cols()).map(|j| (0..x.rows()).map(|i| x[(i, j)]).sum()).collect()
                })
                .collect();
            Ok((g, sums))
        },
        |a, b| match (a, b) {
            (Ok((mut ga, mut sa)), Ok((gb, sb))) => {
                ga.add_scaled(1.0, &gb);
                for (x, y) in sa.iter_mut().zip(&sb) {
                    axpy(1.0, y, x);
                }
                Ok((ga, sa))
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
    )
    .expect("nonempty dataset")?;
    let inv = 1.0 / data.len() as f64;
    let em = gram.scale(inv).symmetrize();
    let means: Vec<Vec<f64>> = sums.iter().map(|s| s.iter().map(|v| v * inv).collect()).collect();
    let eig = eigensolver("auto")?.solve(&em)?;

    let mut candidates: Vec<(f64, Vec<f64>)> = (0..eig.len())
        .map(|i| {
            let u = eig.vector(i);
            let mut w = Vec::with_capacity(model.num_params());
            let mut off = 0;
            for (p, mean) in means.iter().enumerate() {
                let m = model.layer_shape(p).0;
                w.extend(kron_vec(&u[off..off + m], mean));
                off += m;
            }
            let nw = norm(&w);
            (eig.values[i] * nw * nw, w)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for (score, mut w) in candidates {
        if basis.len() == k {
            break;
        }
        let start = norm(&w);
        if start == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let d = dot(q, &w);
                axpy(-d, q, &mut w);
            }
        }
        let n = norm(&w);
        if n <= 1e-10 * start {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= n);
        basis.push(w);
        values.push(score);
    }
    Ok(FullHessianApprox {
        values,
        vectors: Matrix::from_columns(&basis)?,
    })
}

/// Implicit Gauss–Newton term of the full-parameter Hessian.
#[derive(Clone, Debug)]
pub struct FullGTermOperator {
    total: usize,
    c: usize,
    shapes: Vec<(usize, usize)>,
    factors: Matrix,
    inputs: Vec<Matrix>,
}

pub fn full_gterm_operator(model: &MlpModel, data: &Dataset) -> Result<FullGTermOperator> {
    check_layer(model, data, 0)?;
    let total: usize = model.layer_dims()[1..].iter().sum();
    let c = model.num_classes();
    let l = model.num_layers();
    let ranges = parallel::chunk_ranges(data.len(), CHUNK);
    let parts = parallel::map_ordered(ranges.len(), |i| -> Result<(Matrix, Vec<Matrix>)> {
        let idx: Vec<usize> = ranges[i].clone().collect();
        let fw = forward_batch(model, &data.inputs.select_rows(&idx))?;
        let xs = (0..l).map(|p| extend_inputs(&fw.layer_inputs[p], true)).collect();
        Ok((stacked_full(model, &fw, total), xs))
    });
    let mut factors = Vec::with_capacity(data.len() * c * total);
    let mut inputs: Vec<Vec<f64>> = vec![Vec::new(); l];
    for part in parts {
        let (f, xs) = part?;
        factors.extend_from_slice(f.as_slice());
        for (dst, x) in inputs.iter_mut().zip(xs) {
            dst.extend_from_slice(x.as_slice());
        }
    }
    let shapes: Vec<(usize, usize)> = (0..l).map(|p| model.layout().shape(p)).collect();
    let inputs = inputs
        .into_iter()
        .zip(&shapes)
        .map(|(x, &(_, n1))| Matrix::from_vec(data.len(), n1, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(FullGTermOperator {
        total,
        c,
        shapes,
        factors: Matrix::from_vec(data.len() * c, total, factors)?,
        inputs,
    })
}

impl LinearOperator for FullGTermOperator {
    fn dim(&self) -> usize {
        self.shapes.iter().map(|(m, n)| m * n).sum()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "operator input length");
        let ns = self.inputs[0].rows();
        let (c, total) = (self.c, self.total);
        let mut y = Matrix::zeros(ns, total);
        let mut off_v = 0;
        let mut off_z = 0;
        for (p, &(m, n1)) in self.shapes.iter().enumerate() {
            let mat = Matrix::from_vec(m, n1, v[off_v..off_v + m * n1].to_vec()).expect("shape");
            let yp = self.inputs[p].matmul_t(&mat);
            for s in 0..ns {
                y.row_mut(s)[off_z..off_z + m].copy_from_slice(yp.row(s));
            }
            off_v += m * n1;
            off_z += m;
        }
        let f = self.factors.as_slice();
        let mut r = Matrix::zeros(ns, total);
        let mut t = vec![0.0; c];
        for s in 0..ns {
            let nsf = &f[s * c * total..(s + 1) * c * total];
            let ys = y.row(s);
            for (a, ta) in t.iter_mut().enumerate() {
                *ta = dot(&nsf[a * total..(a + 1) * total], ys);
            }
            let rs = r.row_mut(s);
            for (a, &ta) in t.iter().enumerate() {
                axpy(ta, &nsf[a * total..(a + 1) * total], rs);
            }
        }
        let mut out = Vec::with_capacity(self.dim());
        let mut off_z = 0;
        for (p, &(m, _)) in self.shapes.iter().enumerate() {
            let cols: Vec<usize> = (off_z..off_z + m).collect();
            let rp = r.select_cols(&cols);
            let mut block = rp.t_matmul(&self.inputs[p]);
            block.scale_in_place(1.0 / ns as f64);
            out.extend_from_slice(block.as_slice());
            off_z += m;
        }
        out
    }
}
