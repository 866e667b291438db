use super::eig::{eigensolver, EigenSolver, Jacobi};
use super::vector::{axpy, dot, norm};
use super::Matrix;
use crate::error::{Error, Result};

/// Default upper bound on the number of entries `kron` will allocate.
pub const KRON_MAX_ENTRIES: usize = 1 << 26;

/// Columns whose residual falls below this are dropped by [`orthonormalize`].
pub const ORTHO_DROP_TOL: f64 = 1e-10;

/// Kronecker product with the block layout
/// `(A⊗B)[i1·rows(B)+i2, j1·cols(B)+j2] = A[i1,j1]·B[i2,j2]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    kron_with_cap(a, b, KRON_MAX_ENTRIES)
}

pub fn kron_with_cap(a: &Matrix, b: &Matrix, max_entries: usize) -> Result<Matrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    let entries = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c));
    match entries {
        Some(e) if e <= max_entries => {}
        _ => {
            return Err(Error::Capacity(format!(
                "kron of {:?} and {:?} exceeds {max_entries} entries",
                a.shape(),
                b.shape()
            )))
        }
    }
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(a.rows() * br, a.cols() * bc);
    for i1 in 0..a.rows() {
        for j1 in 0..a.cols() {
            let s = a[(i1, j1)];
            if s == 0.0 {
                continue;
            }
            for i2 in 0..br {
                let row = &mut out.row_mut(i1 * br + i2)[j1 * bc..(j1 + 1) * bc];
                axpy(s, b.row(i2), row);
            }
        }
    }
    Ok(out)
}

/// `u ⊗ v` for vectors; equals the row-major vectorization of `u vᵀ`.
pub fn kron_vec(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for &ui in u {
        out.extend(v.iter().map(|&vj| ui * vj));
    }
    out
}

/// Singular values in descending order, from the eigenvalues of the smaller
/// Gram matrix.
pub fn svd_values(a: &Matrix) -> Vec<f64> {
    svd_values_with(a, &Jacobi)
}

pub fn svd_values_with(a: &Matrix, solver: &dyn EigenSolver) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    let gram = if a.rows() <= a.cols() { a.matmul_t(a) } else { a.t_matmul(a) };
    let eig = solver
        .solve(&gram.symmetrize())
        .or_else(|_| eigensolver("tridiagonal-ql").and_then(|s| s.solve(&gram.symmetrize())))
        .expect("Gram matrix of a finite matrix is symmetric");
    eig.values.iter().map(|&v| v.max(0.0).sqrt()).collect()
}

/// Orthonormal basis of the column span: modified Gram–Schmidt with one
/// reorthogonalization pass. Columns whose residual norm drops below
/// [`ORTHO_DROP_TOL`] are discarded, so the result may be narrower.
pub fn orthonormalize(v: &Matrix) -> Matrix {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for j in 0..v.cols() {
        let mut w = v.col(j);
        for _pass in 0..2 {
            for q in &kept {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let nrm = norm(&w);
        if nrm < ORTHO_DROP_TOL {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        kept.push(w);
    }
    if kept.is_empty() {
        return Matrix::zeros(v.rows(), 0);
    }
    Matrix::from_columns(&kept).expect("columns share the row count")
}

/// Orthogonal projector `Q Qᵀ` onto the span of orthonormal columns.
pub fn projector(q: &Matrix) -> Matrix {
    q.matmul_t(q)
}
