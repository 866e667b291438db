//! Empirical checks of the low-rank output-Hessian theorem for random
//! two-layer ReLU networks and its multi-layer extension.

use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::hessian::{output_hessian, s_matrix};
use crate::linalg::gemm::gemm_into;
use crate::linalg::{eigensolver, orthonormalize, svd_values, vector, EigenSolver, Matrix};
use crate::metrics::subspace_overlap;
use crate::network::{q_factor, softmax, softmax_hessian, MlpModel};
use crate::parallel;
use crate::rng;

/// Widest hidden layer accepted by the theorem harness.
pub const THEOREM_MAX_WIDTH: usize = 4096;
const SAMPLE_CHUNK: usize = 256;
const RANK_TOL: f64 = 1e-8;

/// Orthonormal basis of the row space of `W` (`c × n`) with the direction of
/// `Wᵀ1` removed: `n × (c − 1)`.
pub fn target_subspace(w: &Matrix) -> Result<Matrix> {
    let (c, n) = w.shape();
    if c < 2 || c > n {
        return Err(Error::Precondition(format!("need 2 ≤ c ≤ n, got a {c}×{n} matrix")));
    }
    let sv = svd_values(w);
    if sv[0] == 0.0 || sv[c - 1] / sv[0] < RANK_TOL {
        return Err(Error::Degenerate("matrix is rank deficient".into()));
    }
    let q = orthonormalize(&w.transpose());
    if q.cols() != c {
        return Err(Error::Degenerate("row space has lower dimension than expected".into()));
    }
    let g = w.t_matvec(&vec![1.0; c]);
    let coeffs = q.t_matvec(&g);
    let mut dir = q.matvec(&coeffs);
    if vector::normalize(&mut dir) <= RANK_TOL * vector::norm(&g).max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("Wᵀ1 has no component in the row space".into()));
    }
    let mut cols = vec![dir];
    cols.extend((0..c).map(|j| q.col(j)));
    let basis = orthonormalize(&Matrix::from_columns(&cols)?);
    if basis.cols() != c {
        return Err(Error::Degenerate("deflated basis lost rank".into()));
    }
    Ok(basis.select_cols(&(1..c).collect::<Vec<_>>()))
}

/// `Wᵀ(WWᵀ)⁻¹1`, the minimum-norm `u` with `W u = 1`.
pub fn pullback_of_ones(w: &Matrix) -> Result<Vec<f64>> {
    let c = w.rows();
    let e = eigensolver("jacobi")?.solve(&w.matmul_t(w))?;
    if e.values[c - 1] <= RANK_TOL * RANK_TOL * e.values[0] {
        return Err(Error::Degenerate("matrix is rank deficient".into()));
    }
    let coeffs = e.vectors.t_matvec(&vec![1.0; c]);
    let scaled: Vec<f64> = coeffs.iter().zip(&e.values).map(|(a, l)| a / l).collect();
    Ok(w.t_matvec(&e.vectors.matvec(&scaled)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremReport {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// `λ_c / λ_{c−1}` of `E[M]`.
    pub eig_ratio: f64,
    /// Overlap of the top `c − 1` eigenvectors with the target subspace.
    pub overlap: f64,
    /// `‖E[M] − M*‖_F / ‖E[M]‖_F` for the decoupled `M* = ¼(WᵀÃW + diag(WᵀÃW))`.
    pub decoupled_distance: f64,
    /// `‖E[M] u‖ / λ_1` for the unit vector `u ∝ W⁺1`, the minimum-norm
    /// solution of `W u = 1`, which the softmax Hessian annihilates.
    pub null_residual: f64,
    /// Wall-clock time; not serialized so reports are reproducible.
    #[serde(skip_serializing)]
    pub runtime_secs: f64,
}

/// The random network of the theorem: `W1 ~ N(0, 1/d)`, `W2 ~ N(0, 1/n)`,
/// zero biases.
pub fn theorem_model(n: usize, d: usize, c: usize, seed: u64) -> Result<MlpModel> {
    let mut model = MlpModel::zeros(&[d, n, c])?;
    let mut r = rng::stream(seed, 0);
    for (p, fan_in) in [(0, d), (1, n)] {
        let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive std");
        for v in model.weight_mut(p).as_mut_slice() {
            *v = dist.sample(&mut r);
        }
    }
    Ok(model)
}

fn sample_chunk(seed: u64, chunk: usize, rows: usize, d: usize) -> Matrix {
    let mut r = rng::stream(seed, 1 + chunk as u64);
    Matrix::from_vec(rows, d, rng::normal_vec(&mut r, rows * d)).expect("shape")
}

/// The `N` Gaussian inputs used by [`run_theorem_check`], materialized.
/// Labels are irrelevant to the output Hessian and set to 0.
pub fn theorem_samples(n_samples: usize, d: usize, c: usize, seed: u64) -> Result<Dataset> {
    let mut data = Vec::with_capacity(n_samples * d);
    for (i, range) in parallel::chunk_ranges(n_samples, SAMPLE_CHUNK).into_iter().enumerate() {
        data.extend_from_slice(sample_chunk(seed, i, range.len(), d).as_slice());
    }
    Dataset::new(Matrix::from_vec(n_samples, d, data)?, vec![0; n_samples], c, "theorem-gaussian")
}

pub fn run_theorem_check(n: usize, d: usize, c: usize, n_samples: usize, seed: u64) -> Result<TheoremReport> {
    run_theorem_check_with(n, d, c, n_samples, seed, eigensolver("auto")?.as_ref())
}

pub fn run_theorem_check_with(
    n: usize,
    d: usize,
    c: usize,
    n_samples: usize,
    seed: u64,
    solver: &dyn EigenSolver,
) -> Result<TheoremReport> {
    let start = Instant::now();
    if c < 2 || n < c || d == 0 || n_samples == 0 {
        return Err(Error::Precondition(format!("invalid sizes n={n}, d={d}, c={c}, N={n_samples}")));
    }
    if n > THEOREM_MAX_WIDTH {
        return Err(Error::Capacity(format!("hidden width {n} above {THEOREM_MAX_WIDTH}")));
    }
    let model = theorem_model(n, d, c, seed)?;
    let (w1, w2) = (model.weight(0), model.weight(1));
    let ranges = parallel::chunk_ranges(n_samples, SAMPLE_CHUNK);
    let (gram, a_sum) = parallel::map_reduce(
        ranges.len(),
        1,
        |chunks| {
            let i = chunks.start;
            let x = sample_chunk(seed, i, ranges[i].len(), d);
            let rows = x.rows();
            let mut z = Matrix::zeros(rows, n);
            gemm_into(1.0, &x, false, w1, true, 0.0, &mut z);
            let h = z.map(|v| v.max(0.0));
            let logits = h.matmul_t(w2);
            let mut b = Matrix::zeros(rows * c, n);
            let mut a_sum = Matrix::zeros(c, c);
            for s in 0..rows {
                let p = softmax(logits.row(s));
                a_sum.add_scaled(1.0, &softmax_hessian(&p));
                let ns = q_factor(&p).matmul(w2);
                let zs = z.row(s);
                for a in 0..c {
                    let dst = b.row_mut(s * c + a);
                    for ((dv, &nv), &zv) in dst.iter_mut().zip(ns.row(a)).zip(zs) {
                        *dv = if zv > 0.0 { nv } else { 0.0 };
                    }
                }
            }
            let mut g = Matrix::zeros(n, n);
            gemm_into(1.0, &b, true, &b, false, 0.0, &mut g);
            (g, a_sum)
        },
        |(mut ga, mut aa), (gb, ab)| {
            ga.add_scaled(1.0, &gb);
            aa.add_scaled(1.0, &ab);
            (ga, aa)
        },
    )
    .expect("at least one chunk");
    let inv = 1.0 / n_samples as f64;
    let em = gram.scale(inv).symmetrize();
    let a_tilde = a_sum.scale(inv);

    let wtaw = w2.t_matmul(&a_tilde.matmul(w2));
    let mut m_star = wtaw.scale(0.25);
    for i in 0..n {
        m_star[(i, i)] += 0.25 * wtaw[(i, i)];
    }
    let decoupled_distance = em.sub(&m_star).frobenius_norm() / em.frobenius_norm();

    let eig = solver.solve(&em)?;
    let eig_ratio = eig.values[c - 1] / eig.values[c - 2];
    let top = eig.vectors.leading_cols(c - 1);
    let overlap = subspace_overlap(&top, &target_subspace(w2)?)?;

    let null_residual = {
        let mut u = pullback_of_ones(w2)?;
        vector::normalize(&mut u);
        vector::norm(&em.matvec(&u)) / eig.values[0]
    };

    Ok(TheoremReport {
        n,
        d,
        c,
        n_samples,
        seed,
        eig_ratio,
        overlap,
        decoupled_distance,
        null_residual,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Reports for every `(n, d)` cell and seed, in input order.
pub fn run_theorem_grid(cells: &[(usize, usize)], c: usize, n_samples: usize, seeds: &[u64]) -> Result<Vec<TheoremReport>> {
    let mut out = Vec::with_capacity(cells.len() * seeds.len());
    for &(n, d) in cells {
        for &seed in seeds {
            out.push(run_theorem_check(n, d, c, n_samples, seed)?);
        }
    }
    Ok(out)
}

/// Overlap between the top `c − 1` eigenvectors of `E[M^(p)]` and the
/// closed-form prediction `R(S^(p)ᵀ) ⊖ S^(p)ᵀ1`.
pub fn multilayer_overlap(model: &MlpModel, data: &Dataset, p: usize) -> Result<f64> {
    let c = model.num_classes();
    let s = s_matrix(model, p)?;
    let target = target_subspace(&s)?;
    let em = output_hessian(model, data, p)?;
    let eig = eigensolver("auto")?.solve(&em)?;
    subspace_overlap(&eig.vectors.leading_cols(c - 1), &target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector;

    #[test]
    fn target_of_identity_rows() {
        let c = 3;
        let w = Matrix::identity(5).select_rows(&[0, 1, 2]);
        let t = target_subspace(&w).unwrap();
        assert_eq!(t.shape(), (5, 2));
        assert!(t.orthonormality_defect() < 1e-12);
        let ones = [1.0, 1.0, 1.0, 0.0, 0.0];
        assert!(t.t_matvec(&ones).iter().all(|v| v.abs() < 1e-12));
        for j in 0..c - 1 {
            let col = t.col(j);
            assert!(col[3].abs() < 1e-14 && col[4].abs() < 1e-14);
        }
    }

    #[test]
    fn target_lies_in_row_space() {
        let mut r = rng::seeded(3);
        let w = Matrix::from_vec(4, 12, rng::normal_vec(&mut r, 48)).unwrap();
        let t = target_subspace(&w).unwrap();
        let p = projector(&orthonormalize(&w.transpose()));
        for j in 0..3 {
            let col = t.col(j);
            let resid = vector::sub(&col, &p.matvec(&col));
            assert!(vector::norm(&resid) < 1e-10);
        }
        assert!(vector::dot(&t.col(0), &w.t_matvec(&[1.0; 4])).abs() < 1e-10);
        let rank1 = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert!(matches!(target_subspace(&rank1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn small_check_matches_layer_factors() {
        let (n, d, c, ns, seed) = (24, 40, 4, 300, 5);
        let rep = run_theorem_check(n, d, c, ns, seed).unwrap();
        let model = theorem_model(n, d, c, seed).unwrap();
        let data = theorem_samples(ns, d, c, seed).unwrap();
        let em = output_hessian(&model, &data, 0).unwrap();
        let eig = eigensolver("auto").unwrap().solve(&em).unwrap();
        assert!((eig.values[c - 1] / eig.values[c - 2] - rep.eig_ratio).abs() < 1e-10);
        assert!((0.0..=1.0 + 1e-9).contains(&rep.overlap));
        assert_eq!(rep, run_theorem_check(n, d, c, ns, seed).unwrap().with_runtime(rep.runtime_secs));
    }

    #[test]
    fn pullback_solves_w_u_equals_one() {
        let mut r = rng::seeded(4);
        let w = Matrix::from_vec(3, 7, rng::normal_vec(&mut r, 21)).unwrap();
        let u = pullback_of_ones(&w).unwrap();
        for v in w.matvec(&u) {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn two_classes_gives_one_dimensional_target() {
        let rep = run_theorem_check(16, 32, 2, 200, 1).unwrap();
        assert!(rep.eig_ratio >= 0.0 && rep.eig_ratio <= 1.0);
        let model = theorem_model(16, 32, 2, 1).unwrap();
        assert_eq!(target_subspace(model.weight(1)).unwrap().cols(), 1);
    }

    impl TheoremReport {
        fn with_runtime(mut self, t: f64) -> Self {
            self.runtime_secs = t;
            self
        }
    }
}
