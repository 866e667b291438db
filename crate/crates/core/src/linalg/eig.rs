//! Dense symmetric eigensolvers.
//!
//! Solvers implement [`EigenSolver`] and are registered by name:
//!
//! * `jacobi` — cyclic Jacobi rotations, the reference solver.
//! * `tridiagonal-ql` — Householder tridiagonalization followed by implicit
//!   QL with Wilkinson shifts (EISPACK `tred2`/`tql2`).
//! * `auto` — `jacobi` up to [`AUTO_JACOBI_MAX_DIM`], `tridiagonal-ql` above.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Inputs this far from symmetric are rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;
pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const AUTO_JACOBI_MAX_DIM: usize = 128;

/// Eigenpairs sorted by descending eigenvalue; `vectors` holds one unit
/// eigenvector per column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigPairs {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigPairs {
    /// Sorts descending (stable in the original order) and applies the sign
    /// convention to every column.
    pub fn from_unsorted(values: Vec<f64>, vectors: Matrix) -> Self {
        assert_eq!(values.len(), vectors.cols(), "one vector per value");
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let mut vectors = vectors.select_cols(&order);
        let values = order.iter().map(|&i| values[i]).collect();
        for j in 0..vectors.cols() {
            fix_sign(&mut vectors, j);
        }
        Self { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.rows()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }

    /// The leading `k` pairs.
    pub fn top(&self, k: usize) -> EigPairs {
        let k = k.min(self.len());
        EigPairs {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.leading_cols(k),
        }
    }

    /// `V Λ Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.dim(), self.len(), |i, j| self.vectors[(i, j)] * self.values[j]);
        scaled.matmul_t(&self.vectors)
    }
}

/// Flips column `j` so its largest-magnitude entry is positive; ties go to the
/// lowest index.
fn fix_sign(v: &mut Matrix, j: usize) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for i in 0..v.rows() {
        let a = v[(i, j)].abs();
        if a > best_abs {
            best = i;
            best_abs = a;
        }
    }
    if v.rows() > 0 && v[(best, j)] < 0.0 {
        for i in 0..v.rows() {
            v[(i, j)] = -v[(i, j)];
        }
    }
}

pub trait EigenSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Full eigendecomposition of a symmetric matrix.
    fn solve(&self, a: &Matrix) -> Result<EigPairs>;
}

fn checked_symmetric(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::Precondition("matrix has non-finite entries".into()));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::Precondition(format!("matrix is not symmetric (max |A - Aᵀ| = {asym:e})")));
    }
    Ok(a.symmetrize())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Jacobi;

impl EigenSolver for Jacobi {
    fn name(&self) -> &'static str {
        "jacobi"
    }

    fn solve(&self, a: &Matrix) -> Result<EigPairs> {
        let mut a = checked_symmetric(a)?;
        let n = a.rows();
        // Rows of `vt` are the accumulated eigenvectors.
        let mut vt = Matrix::identity(n);
        let total = a.frobenius_norm();
        let target = 1e-12 * total;
        let mut converged = total == 0.0;
        for _sweep in 0..JACOBI_MAX_SWEEPS {
            if off_diagonal_norm(&a) <= target {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut vt, p, q);
                }
            }
        }
        if !converged && off_diagonal_norm(&a) > target {
            return Err(Error::Solver(format!("Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
        }
        Ok(EigPairs::from_unsorted(a.diagonal(), vt.transpose()))
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        let np = c * arp - s * arq;
        let nq = s * arp + c * arq;
        a[(r, p)] = np;
        a[(p, r)] = np;
        a[(r, q)] = nq;
        a[(q, r)] = nq;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    let cols = vt.cols();
    let data = vt.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let row_p = &mut head[p * cols..(p + 1) * cols];
    let row_q = &mut tail[..cols];
    for (vp, vq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let x = *vp;
        let y = *vq;
        *vp = c * x - s * y;
        *vq = s * x + c * y;
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TridiagonalQl;

impl EigenSolver for TridiagonalQl {
    fn name(&self) -> &'static str {
        "tridiagonal-ql"
    }

    fn solve(&self, a: &Matrix) -> Result<EigPairs> {
        let a = checked_symmetric(a)?;
        let n = a.rows();
        if n == 0 {
            return Ok(EigPairs::from_unsorted(Vec::new(), Matrix::zeros(0, 0)));
        }
        let mut v = a;
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tred2(&mut v, &mut d, &mut e);
        // tred2 leaves the coupling of (i-1, i) in e[i]; tql2 wants it in e[i-1].
        let mut sub: Vec<f64> = e[1..].to_vec();
        sub.push(0.0);
        let mut vt = v.transpose();
        tql2(&mut d, &mut sub, Some(&mut vt))?;
        Ok(EigPairs::from_unsorted(d, vt.transpose()))
    }
}

/// Householder reduction to tridiagonal form. On return `v` holds the
/// orthogonal transformation, `d` the diagonal and `e[i]` the (i-1, i)
/// off-diagonal with `e[0] = 0`.
fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = v.rows();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on a symmetric tridiagonal matrix: diagonal `d`, `e[i]`
/// coupling (i, i+1). When `vt` is given its rows are rotated along, so rows
/// starting as a basis end as the eigenvectors. Eigenvalues are left in `d`
/// unsorted.
pub(crate) fn tql2(d: &mut [f64], e: &mut [f64], mut vt: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let max_iter = 30 * n.max(10);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Solver("QL iteration did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(vt) = vt.as_deref_mut() {
                        let cols = vt.cols();
                        let data = vt.as_mut_slice();
                        let (head, tail) = data.split_at_mut((i + 1) * cols);
                        let row_i = &mut head[i * cols..];
                        let row_next = &mut tail[..cols];
                        for (vi, vn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                            let hk = *vn;
                            *vn = s * *vi + c * hk;
                            *vi = c * *vi - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Auto;

impl EigenSolver for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, a: &Matrix) -> Result<EigPairs> {
        if a.rows() <= AUTO_JACOBI_MAX_DIM {
            Jacobi.solve(a)
        } else {
            TridiagonalQl.solve(a)
        }
    }
}

pub fn eigensolvers() -> Registry<dyn EigenSolver> {
    let mut reg: Registry<dyn EigenSolver> = Registry::new("eigensolver");
    reg.register("jacobi", || Box::new(Jacobi))
        .register("tridiagonal-ql", || Box::new(TridiagonalQl))
        .register("auto", || Box::new(Auto));
    reg
}

pub fn eigensolver(name: &str) -> Result<Box<dyn EigenSolver>> {
    eigensolvers().create(name)
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi.
pub fn sym_eig_dense(a: &Matrix) -> Result<EigPairs> {
    Jacobi.solve(a)
}
