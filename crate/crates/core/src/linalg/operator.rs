use super::Matrix;

/// Symmetric linear map given only through its action.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

/// A dense symmetric matrix viewed as an operator.
#[derive(Clone, Debug)]
pub struct DenseOperator(pub Matrix);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.rows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.matvec(x)
    }
}

/// Operator from a closure.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// Materializes the operator column by column.
pub fn to_dense(op: &dyn LinearOperator) -> Matrix {
    let n = op.dim();
    let mut m = Matrix::zeros(n, n);
    for k in 0..n {
        let col = op.apply(&super::vector::basis(n, k));
        m.set_col(k, &col);
    }
    m
}

/// Largest `|a·Hb − b·Ha| / (‖a‖‖b‖)` over `probes` random pairs.
pub fn symmetry_defect(op: &dyn LinearOperator, probes: usize, seed: u64) -> f64 {
    use super::vector::{dot, norm};
    let mut rng = crate::rng::seeded(seed);
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        let a = crate::rng::normal_vec(&mut rng, op.dim());
        let b = crate::rng::normal_vec(&mut rng, op.dim());
        let lhs = dot(&a, &op.apply(&b));
        let rhs = dot(&b, &op.apply(&a));
        worst = worst.max((lhs - rhs).abs() / (norm(&a) * norm(&b)));
    }
    worst
}
