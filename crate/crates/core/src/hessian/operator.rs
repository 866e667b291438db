use super::{check_layer, extend_inputs, stacked_factor, CHUNK};
use crate::datasets::Dataset;
use crate::error::Result;
use crate::linalg::{LinearOperator, Matrix};
use crate::network::{forward_batch, MlpModel};
use crate::parallel;

/// Implicit layer-wise Hessian `v ↦ E[vec(M_x Mat(v) x̃ x̃ᵀ)]`.
///
/// Stores the per-sample `N_x` factors and extended inputs; `H` itself is
/// never formed.
#[derive(Clone, Debug)]
pub struct LayerHessianOperator {
    m: usize,
    n_ext: usize,
    c: usize,
    factors: Matrix,
    inputs: Matrix,
}

impl LayerHessianOperator {
    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n_ext)
    }

    pub fn num_samples(&self) -> usize {
        self.inputs.rows()
    }
}

pub fn layerwise_hvp_operator(model: &MlpModel, data: &Dataset, p: usize, include_bias: bool) -> Result<LayerHessianOperator> {
    check_layer(model, data, p)?;
    let (m, n) = model.layer_shape(p);
    let c = model.num_classes();
    let parts: Vec<Result<(Matrix, Matrix)>> = {
        let ranges = parallel::chunk_ranges(data.len(), CHUNK);
        parallel::map_ordered(ranges.len(), |i| {
            let idx: Vec<usize> = ranges[i].clone().collect();
            let fw = forward_batch(model, &data.inputs.select_rows(&idx))?;
            Ok((stacked_factor(model, &fw, p), extend_inputs(&fw.layer_inputs[p], include_bias)))
        })
    };
    let n_ext = n + include_bias as usize;
    let mut factors = Vec::with_capacity(data.len() * c * m);
    let mut inputs = Vec::with_capacity(data.len() * n_ext);
    for part in parts {
        let (f, x) = part?;
        factors.extend_from_slice(f.as_slice());
        inputs.extend_from_slice(x.as_slice());
    }
    Ok(LayerHessianOperator {
        m,
        n_ext,
        c,
        factors: Matrix::from_vec(data.len() * c, m, factors)?,
        inputs: Matrix::from_vec(data.len(), n_ext, inputs)?,
    })
}

impl LinearOperator for LayerHessianOperator {
    fn dim(&self) -> usize {
        self.m * self.n_ext
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "operator input length");
        let (m, c) = (self.m, self.c);
        let mat = Matrix::from_vec(m, self.n_ext, v.to_vec()).expect("shape");
        // y_s = Mat(v) x̃_s, then r_s = N_sᵀ N_s y_s
        let y = self.inputs.matmul_t(&mat);
        let f = self.factors.as_slice();
        let mut r = Matrix::zeros(self.num_samples(), m);
        let mut t = vec![0.0; c];
        for s in 0..self.num_samples() {
            let ns = &f[s * c * m..(s + 1) * c * m];
            let ys = y.row(s);
            for (a, ta) in t.iter_mut().enumerate() {
                *ta = ns[a * m..(a + 1) * m].iter().zip(ys).map(|(x, y)| x * y).sum();
            }
            let rs = r.row_mut(s);
            for (a, &ta) in t.iter().enumerate() {
                for (ri, &x) in rs.iter_mut().zip(&ns[a * m..(a + 1) * m]) {
                    *ri += ta * x;
                }
            }
        }
        let mut out = r.t_matmul(&self.inputs);
        out.scale_in_place(1.0 / self.num_samples() as f64);
        out.into_vec()
    }
}
