use serde::Serialize;

use super::LayerFactors;
use crate::error::{Error, Result};
use crate::linalg::{kron_vec, Matrix};

/// Eigenpairs of `E[M] ⊗ E[x̃x̃ᵀ]` built from the factor eigenpairs.
#[derive(Clone, Debug, Serialize)]
pub struct KronSpectrum {
    pub values: Vec<f64>,
    /// `(i, j)` with `values[r] = out_eig.values[i] · in_eig.values[j]`.
    pub factors: Vec<(usize, usize)>,
    /// Columns `u_i ⊗ v_j`.
    pub vectors: Matrix,
}

pub fn kron_approx_spectrum(f: &LayerFactors, k: usize) -> Result<KronSpectrum> {
    let (m, n) = (f.out_eig.len(), f.in_eig.len());
    if k == 0 || k > m * n {
        return Err(Error::Precondition(format!("k = {k} outside [1, {}]", m * n)));
    }
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(m * n);
    for (i, &a) in f.out_eig.values.iter().enumerate() {
        for (j, &b) in f.in_eig.values.iter().enumerate() {
            all.push((a * b, i, j));
        }
    }
    // descending value, then (i, j) ascending
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    all.truncate(k);
    let mut vectors = Matrix::zeros(m * n, k);
    for (col, &(_, i, j)) in all.iter().enumerate() {
        vectors.set_col(col, &kron_vec(&f.out_eig.vector(i), &f.in_eig.vector(j)));
    }
    Ok(KronSpectrum {
        values: all.iter().map(|t| t.0).collect(),
        factors: all.iter().map(|t| (t.1, t.2)).collect(),
        vectors,
    })
}
