//! Structural metrics on Hessian eigenspaces.

use serde::Serialize;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::hessian::{layerwise_dense, layerwise_hvp_operator, LayerFactors};
use crate::linalg::{eigensolver, lanczos_topk_with_residuals, svd_values, vector, EigPairs, Matrix};
use crate::network::MlpModel;
use crate::parallel;

/// Extra Ritz pairs computed beyond the largest requested `k`.
pub const DEFLATION_MARGIN: usize = 10;
/// Ritz pairs with `‖Hv − λv‖ > RESIDUAL_GATE · λ_1` are treated as unconverged.
pub const RESIDUAL_GATE: f64 = 1e-4;
const ORTHONORMAL_TOL: f64 = 1e-6;

/// `‖UᵀV‖_F² / k` for two orthonormal `D × k` bases.
pub fn subspace_overlap(u: &Matrix, v: &Matrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::Dimension(format!(
            "bases {:?} and {:?} differ in shape",
            u.shape(),
            v.shape()
        )));
    }
    let k = u.cols();
    if k == 0 {
        return Err(Error::Precondition("empty subspace".into()));
    }
    for (name, b) in [("U", u), ("V", v)] {
        let defect = b.orthonormality_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::Precondition(format!("{name} is not orthonormal (defect {defect:e})")));
        }
    }
    let c = u.t_matmul(v);
    Ok(c.frobenius_norm().powi(2) / k as f64)
}

/// Row-major reshape so that `matricize(u ⊗ v) = u vᵀ`.
pub fn matricize(h: &[f64], m: usize, n: usize) -> Result<Matrix> {
    if h.len() != m * n {
        return Err(Error::Precondition(format!(
            "vector of length {} cannot be shaped {m}×{n}",
            h.len()
        )));
    }
    Matrix::from_vec(m, n, h.to_vec())
}

pub fn vectorize(a: &Matrix) -> Vec<f64> {
    a.as_slice().to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrespondenceKind {
    Input,
    Output,
}

/// Entry `(i, j)` is the squared norm of factor eigenvector `i` seen through
/// Hessian eigenvector `j`.
#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceMatrix {
    pub kind: CorrespondenceKind,
    pub data: Matrix,
}

fn correspondence(h: &Matrix, basis: &Matrix, m: usize, n: usize, kind: CorrespondenceKind) -> Result<CorrespondenceMatrix> {
    if h.rows() != m * n {
        return Err(Error::Dimension(format!(
            "Hessian eigenvectors have length {}, expected {}",
            h.rows(),
            m * n
        )));
    }
    let side = if kind == CorrespondenceKind::Input { n } else { m };
    if basis.rows() != side {
        return Err(Error::Dimension(format!(
            "factor eigenvectors have length {}, expected {side}",
            basis.rows()
        )));
    }
    let t = h.cols();
    let mut data = Matrix::zeros(basis.cols(), t);
    for j in 0..t {
        let mat = matricize(&h.col(j), m, n)?;
        let proj = match kind {
            CorrespondenceKind::Input => mat.matmul(basis),
            CorrespondenceKind::Output => mat.t_matmul(basis),
        };
        for i in 0..basis.cols() {
            data[(i, j)] = (0..proj.rows()).map(|r| proj[(r, i)].powi(2)).sum();
        }
    }
    Ok(CorrespondenceMatrix { kind, data })
}

/// `‖Mat(h_j) v_i‖²` for Hessian eigenvectors `h_j` (columns) and input
/// factor eigenvectors `v_i` (columns).
pub fn correspondence_input(h_vecs: &Matrix, in_vecs: &Matrix, m: usize, n: usize) -> Result<CorrespondenceMatrix> {
    correspondence(h_vecs, in_vecs, m, n, CorrespondenceKind::Input)
}

/// `‖Mat(h_j)ᵀ u_i‖²`.
pub fn correspondence_output(h_vecs: &Matrix, out_vecs: &Matrix, m: usize, n: usize) -> Result<CorrespondenceMatrix> {
    correspondence(h_vecs, out_vecs, m, n, CorrespondenceKind::Output)
}

/// Top singular value over Frobenius norm of the matricized vector.
pub fn top_singular_ratio(h: &[f64], m: usize, n: usize) -> Result<f64> {
    let mat = matricize(h, m, n)?;
    let fro = mat.frobenius_norm();
    if fro == 0.0 {
        return Err(Error::Precondition("zero vector has no singular ratio".into()));
    }
    let top = svd_values(&mat)[0];
    Ok((top / fro).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AutocorrStats {
    /// `(v_1 · E[x]/‖E[x]‖)²`.
    pub sq_dot: f64,
    /// `λ_1 / λ_2` of `E[xxᵀ]`; infinite when `λ_2` vanishes.
    pub spec_ratio: f64,
    /// `‖E[x]E[x]ᵀ‖ / ‖Cov[x]‖`; infinite for zero covariance.
    pub mean_vs_cov: f64,
}

/// Relative threshold below which a second eigenvalue counts as zero.
pub const SPECTRAL_ZERO: f64 = 1e-12;

pub fn autocorr_stats(f: &LayerFactors, x_mean: &[f64]) -> Result<AutocorrStats> {
    if x_mean.len() != f.in_dim() {
        return Err(Error::Dimension(format!(
            "mean has length {}, factor is {}",
            x_mean.len(),
            f.in_dim()
        )));
    }
    let mn = vector::norm(x_mean);
    if mn == 0.0 {
        return Err(Error::Precondition("input mean is zero".into()));
    }
    let v1 = f.in_eig.vector(0);
    let sq_dot = (vector::dot(&v1, x_mean) / mn).powi(2);
    let l1 = f.in_eig.values[0];
    let l2 = f.in_eig.values.get(1).copied().unwrap_or(0.0);
    let spec_ratio = if l2 <= SPECTRAL_ZERO * l1 { f64::INFINITY } else { l1 / l2 };
    let cov = f.input_autocorr.sub(&Matrix::outer(x_mean, x_mean)).symmetrize();
    let cov_eig = eigensolver("auto")?.solve(&cov)?;
    let cov_norm = cov_eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mean_norm = mn * mn;
    let mean_vs_cov = if cov_norm <= SPECTRAL_ZERO * mean_norm {
        f64::INFINITY
    } else {
        mean_norm / cov_norm
    };
    Ok(AutocorrStats {
        sq_dot,
        spec_ratio,
        mean_vs_cov,
    })
}

/// Leading eigenpairs of a layer-wise Hessian with their residual norms.
#[derive(Clone, Debug)]
pub struct LayerEigenspace {
    pub pairs: EigPairs,
    pub residuals: Vec<f64>,
    pub method: EigMethod,
}

impl LayerEigenspace {
    /// Number of leading pairs passing the residual gate.
    pub fn converged(&self) -> usize {
        let scale = self.pairs.values.first().map_or(0.0, |v| v.abs()).max(f64::MIN_POSITIVE);
        self.residuals
            .iter()
            .position(|&r| r > RESIDUAL_GATE * scale)
            .unwrap_or(self.residuals.len())
    }
}

/// Default Lanczos iteration count for `k` wanted pairs in dimension `dim`.
pub fn lanczos_iters(k: usize, dim: usize) -> usize {
    (3 * k).max(k + 100).min(dim)
}

/// Top `k` eigenpairs of the layer-`p` Hessian by Lanczos (`k` is used
/// as-is; callers add any deflation margin).
pub fn layer_eigenspace(model: &MlpModel, data: &Dataset, p: usize, k: usize, include_bias: bool, seed: u64) -> Result<LayerEigenspace> {
    top_layer_eigenpairs(
        model,
        data,
        p,
        k,
        &EigenOptions {
            include_bias,
            seed,
            dense_max_dim: 0,
            lanczos_iters: None,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigMethod {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub include_bias: bool,
    pub seed: u64,
    /// Layers with at most this many parameters are solved densely.
    pub dense_max_dim: usize,
    /// Krylov dimension override for the Lanczos path.
    pub lanczos_iters: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            include_bias: false,
            seed: 0,
            dense_max_dim: 400,
            lanczos_iters: None,
        }
    }
}

/// Top `k` layer-Hessian eigenpairs, materializing small layers and running
/// Lanczos on the rest.
pub fn top_layer_eigenpairs(model: &MlpModel, data: &Dataset, p: usize, k: usize, opts: &EigenOptions) -> Result<LayerEigenspace> {
    let op = layerwise_hvp_operator(model, data, p, opts.include_bias)?;
    let dim = crate::linalg::LinearOperator::dim(&op);
    if k == 0 || k > dim {
        return Err(Error::Precondition(format!("k = {k} outside [1, {dim}]")));
    }
    if dim <= opts.dense_max_dim {
        let h = layerwise_dense(model, data, p, opts.include_bias)?;
        let pairs = eigensolver("auto")?.solve(&h)?.top(k);
        return Ok(LayerEigenspace {
            residuals: vec![0.0; pairs.len()],
            pairs,
            method: EigMethod::Dense,
        });
    }
    let iters = opts.lanczos_iters.unwrap_or_else(|| lanczos_iters(k, dim)).clamp(k, dim);
    let ritz = lanczos_topk_with_residuals(&op, k, iters, opts.seed)?;
    Ok(LayerEigenspace {
        pairs: ritz.pairs,
        residuals: ritz.residuals,
        method: EigMethod::Lanczos,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapCurve {
    pub dims: Vec<usize>,
    /// Mean pairwise overlap.
    pub overlaps: Vec<f64>,
    /// Sample standard deviation across pairs (0 for a single pair).
    pub std: Vec<f64>,
    /// `k / D`, the expected overlap of random subspaces.
    pub baseline: Vec<f64>,
}

#[derive(Clone, Debug)]
#[derive(Default)]
pub struct OverlapOptions {
    pub include_bias: bool,
    pub seed: u64,
}


pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean pairwise overlap of top-`k` layer-Hessian eigenspaces across
/// models, for `k = 1..=k_max`. The curve stops early where any model's
/// eigenvectors fail the residual gate.
pub fn cross_model_overlap(models: &[MlpModel], data: &Dataset, p: usize, k_max: usize, opts: &OverlapOptions) -> Result<OverlapCurve> {
    if models.len() < 2 {
        return Err(Error::Precondition("cross-model overlap needs at least two models".into()));
    }
    if models.iter().any(|m| m.layer_dims() != models[0].layer_dims()) {
        return Err(Error::Precondition("models have different architectures".into()));
    }
    if k_max == 0 {
        return Err(Error::Precondition("k_max must be positive".into()));
    }
    let spaces = parallel::map_ordered(models.len(), |i| {
        layer_eigenspace(&models[i], data, p, k_max + DEFLATION_MARGIN, opts.include_bias, opts.seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let dim = spaces[0].pairs.dim();
    let k_eff = spaces.iter().map(LayerEigenspace::converged).min().unwrap().min(k_max);
    if k_eff == 0 {
        return Err(Error::Solver("no Ritz vector passed the residual gate".into()));
    }
    let mut curve = OverlapCurve {
        dims: Vec::with_capacity(k_eff),
        overlaps: Vec::with_capacity(k_eff),
        std: Vec::with_capacity(k_eff),
        baseline: Vec::with_capacity(k_eff),
    };
    for k in 1..=k_eff {
        let mut vals = Vec::new();
        for i in 0..spaces.len() {
            for j in (i + 1)..spaces.len() {
                let a = spaces[i].pairs.vectors.leading_cols(k);
                let b = spaces[j].pairs.vectors.leading_cols(k);
                vals.push(subspace_overlap(&a, &b)?);
            }
        }
        let (mean, std) = mean_std(&vals);
        curve.dims.push(k);
        curve.overlaps.push(mean);
        curve.std.push(std);
        curve.baseline.push(k as f64 / dim as f64);
    }
    Ok(curve)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Precondition("spearman needs two equal-length samples of size ≥ 2".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate("constant sample has no rank correlation".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron_vec, orthonormalize};
    use crate::rng;

    fn random_basis(d: usize, k: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        orthonormalize(&Matrix::from_vec(d, k, rng::normal_vec(&mut r, d * k)).unwrap())
    }

    #[test]
    fn overlap_basic_cases() {
        let u = random_basis(10, 3, 1);
        assert!((subspace_overlap(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let e = Matrix::identity(4);
        let a = e.select_cols(&[0, 1]);
        let b = e.select_cols(&[2, 3]);
        assert_eq!(subspace_overlap(&a, &b).unwrap(), 0.0);
        let x = random_basis(6, 1, 2);
        let y = random_basis(6, 1, 3);
        let d = vector::dot(&x.col(0), &y.col(0));
        assert!((subspace_overlap(&x, &y).unwrap() - d * d).abs() < 1e-14);
        let bad = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(subspace_overlap(&bad, &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn random_overlap_has_expectation_k_over_d() {
        let (d, k, trials) = (20, 4, 400);
        let vals: Vec<f64> = (0..trials)
            .map(|t| subspace_overlap(&random_basis(d, k, 10 + 2 * t), &random_basis(d, k, 11 + 2 * t)).unwrap())
            .collect();
        let (mean, std) = mean_std(&vals);
        let target = k as f64 / d as f64;
        assert!((mean - target).abs() < 3.0 * std / (trials as f64).sqrt(), "{mean} vs {target}");
    }

    #[test]
    fn matricize_kron_identity_and_isometry() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0];
        let m = matricize(&kron_vec(&u, &v), 3, 2).unwrap();
        assert_eq!(m, Matrix::outer(&u, &v));
        assert_eq!(vectorize(&m), kron_vec(&u, &v));
        assert!((m.frobenius_norm() - vector::norm(&kron_vec(&u, &v))).abs() < 1e-14);
        assert!(matricize(&[1.0; 5], 2, 3).is_err());
    }

    #[test]
    fn correspondence_of_pure_kron_vector() {
        let (m, n) = (3, 4);
        let u = random_basis(m, m, 4);
        let v = random_basis(n, n, 5);
        let h = Matrix::from_columns(&[kron_vec(&u.col(1), &v.col(0))]).unwrap();
        let ci = correspondence_input(&h, &v, m, n).unwrap();
        assert!((ci.data[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(ci.data[(1, 0)].abs() < 1e-12);
        let co = correspondence_output(&h, &u, m, n).unwrap();
        assert!((co.data[(1, 0)] - 1.0).abs() < 1e-12);
        assert!(co.data[(0, 0)].abs() < 1e-12);
        // completeness over a full basis
        let g = random_basis(m * n, 2, 6);
        let full = correspondence_input(&g, &v, m, n).unwrap();
        for j in 0..2 {
            let s: f64 = (0..n).map(|i| full.data[(i, j)]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_ratio_cases() {
        let h = kron_vec(&[1.0, 2.0, 3.0], &[-1.0, 0.5]);
        assert!((top_singular_ratio(&h, 3, 2).unwrap() - 1.0).abs() < 1e-12);
        let id = Matrix::identity(4).scale(0.5);
        assert!((top_singular_ratio(id.as_slice(), 4, 4).unwrap() - 0.5).abs() < 1e-12);
        let mut r = rng::seeded(7);
        let g = rng::normal_vec(&mut r, 2500);
        assert!(top_singular_ratio(&g, 50, 50).unwrap() < 0.5);
        assert!(top_singular_ratio(&[0.0; 4], 2, 2).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }
}
