use super::eig::{tql2, EigPairs};
use super::vector::{axpy, dot, norm, normalize};
use super::{LinearOperator, Matrix};
use crate::error::{Error, Result};
use crate::rng;

/// Restart budget after a Krylov breakdown.
pub const MAX_RESTARTS: usize = 3;
/// A new Lanczos direction shorter than this (relative to the operator scale) is a breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Ritz pairs with their true residual norms `‖Av − θv‖`.
#[derive(Clone, Debug)]
pub struct RitzPairs {
    pub pairs: EigPairs,
    pub residuals: Vec<f64>,
}

/// Top-`k` eigenpairs of a symmetric operator by Lanczos with full
/// reorthogonalization. Deterministic for a fixed `seed`.
pub fn lanczos_topk(op: &dyn LinearOperator, k: usize, iters: usize, seed: u64) -> Result<EigPairs> {
    run(op, k, iters, seed).map(|(pairs, _)| pairs)
}

/// Like [`lanczos_topk`] but also returns the residual of each Ritz pair.
pub fn lanczos_topk_with_residuals(op: &dyn LinearOperator, k: usize, iters: usize, seed: u64) -> Result<RitzPairs> {
    let (pairs, _) = run(op, k, iters, seed)?;
    let residuals = (0..pairs.len())
        .map(|i| {
            let v = pairs.vector(i);
            let mut r = op.apply(&v);
            axpy(-pairs.values[i], &v, &mut r);
            norm(&r)
        })
        .collect();
    Ok(RitzPairs { pairs, residuals })
}

fn orthogonalize_against(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram–Schmidt
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

fn run(op: &dyn LinearOperator, k: usize, iters: usize, seed: u64) -> Result<(EigPairs, usize)> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("need 1 <= k <= dim, got k={k}, dim={n}")));
    }
    if iters < k {
        return Err(Error::Precondition(format!("iters ({iters}) must be >= k ({k})")));
    }
    let iters = iters.min(n);
    let mut restarts = 0;
    // stream 0 is the start vector, stream r the r-th restart probe
    let probe = |stream: u64| rng::normal_vec(&mut rng::stream(seed, stream), n);

    let mut q = probe(0);
    if normalize(&mut q) == 0.0 {
        return Err(Error::Solver("zero start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(iters);
    let mut alpha: Vec<f64> = Vec::with_capacity(iters);
    let mut beta: Vec<f64> = Vec::with_capacity(iters);
    let mut scale = 0.0_f64;
    loop {
        let mut w = op.apply(&q);
        let a = dot(&q, &w);
        basis.push(q);
        alpha.push(a);
        scale = scale.max(a.abs());
        if basis.len() == iters {
            break;
        }
        orthogonalize_against(&mut w, &basis);
        let b = norm(&w);
        scale = scale.max(b);
        if b > BREAKDOWN_TOL * scale.max(1.0) {
            for v in w.iter_mut() {
                *v /= b;
            }
            beta.push(b);
            q = w;
            continue;
        }
        // invariant subspace reached
        if restarts == MAX_RESTARTS {
            if basis.len() >= k {
                break;
            }
            return Err(Error::Solver(format!(
                "Lanczos breakdown after {MAX_RESTARTS} restarts with {} of {k} vectors",
                basis.len()
            )));
        }
        restarts += 1;
        let mut fresh = probe(restarts as u64);
        orthogonalize_against(&mut fresh, &basis);
        if normalize(&mut fresh) < 1e-8 {
            return Err(Error::Solver("Lanczos restart probe lies in the Krylov space".into()));
        }
        beta.push(0.0);
        q = fresh;
    }

    let m = basis.len();
    let mut d = alpha;
    let mut e = beta;
    e.resize(m, 0.0);
    let mut st = Matrix::identity(m);
    tql2(&mut d, &mut e, Some(&mut st))?;
    // rows of `st` are eigenvectors of the tridiagonal matrix
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| d[y].total_cmp(&d[x]));
    order.truncate(k);
    let mut ritz = Matrix::zeros(n, k);
    for (col, &idx) in order.iter().enumerate() {
        let coeffs = st.row(idx);
        let mut v = vec![0.0; n];
        for (c, qv) in coeffs.iter().zip(&basis) {
            axpy(*c, qv, &mut v);
        }
        normalize(&mut v);
        ritz.set_col(col, &v);
    }
    let values = order.iter().map(|&i| d[i]).collect();
    Ok((EigPairs::from_unsorted(values, ritz), restarts))
}
