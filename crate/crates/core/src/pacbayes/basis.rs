use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Orthonormal eigenbases of one layer's Kronecker factors.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerBasis {
    /// Output-side basis, `m × m`.
    pub u: Matrix,
    /// Input-side basis, `(n+1) × (n+1)`.
    pub v: Matrix,
    pub out_values: Vec<f64>,
    pub in_values: Vec<f64>,
}

/// Per-layer change of basis over the flat `[W | b]` parameter layout;
/// `None` layers use the standard basis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bases {
    shapes: Vec<(usize, usize)>,
    layers: Vec<Option<LayerBasis>>,
}

impl Bases {
    pub fn identity(layer_dims: &[usize]) -> Self {
        let shapes: Vec<(usize, usize)> = layer_dims.windows(2).map(|w| (w[1], w[0] + 1)).collect();
        let layers = vec![None; shapes.len()];
        Self { shapes, layers }
    }

    pub fn from_layers(layer_dims: &[usize], layers: Vec<LayerBasis>) -> Result<Self> {
        let mut b = Self::identity(layer_dims);
        if layers.len() != b.shapes.len() {
            return Err(Error::Precondition(format!(
                "{} layer bases for {} layers",
                layers.len(),
                b.shapes.len()
            )));
        }
        for (p, lb) in layers.into_iter().enumerate() {
            b.set_layer(p, lb)?;
        }
        Ok(b)
    }

    pub fn set_layer(&mut self, p: usize, lb: LayerBasis) -> Result<()> {
        let (m, n1) = self.shapes[p];
        if lb.u.shape() != (m, m) || lb.v.shape() != (n1, n1) {
            return Err(Error::Precondition(format!(
                "layer {p} basis shapes {:?}/{:?} do not match the {m}×{n1} block",
                lb.u.shape(),
                lb.v.shape()
            )));
        }
        self.layers[p] = Some(lb);
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.layers.iter().all(Option::is_none)
    }

    pub fn layer(&self, p: usize) -> Option<&LayerBasis> {
        self.layers[p].as_ref()
    }

    pub fn num_params(&self) -> usize {
        self.shapes.iter().map(|(m, n)| m * n).sum()
    }

    /// Kronecker eigenvalue estimate attached to every eigen-coordinate
    /// (`None` for standard-basis layers).
    pub fn coordinate_values(&self) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(self.num_params());
        for (lb, &(m, n1)) in self.layers.iter().zip(&self.shapes) {
            match lb {
                Some(lb) => {
                    for i in 0..m {
                        for j in 0..n1 {
                            out.push(Some(lb.out_values[i] * lb.in_values[j]));
                        }
                    }
                }
                None => out.extend(std::iter::repeat_n(None, m * n1)),
            }
        }
        out
    }
}

fn transform(x: &[f64], bases: &Bases, forward: bool) -> Result<Vec<f64>> {
    if x.len() != bases.num_params() {
        return Err(Error::Precondition(format!(
            "vector has {} entries, bases cover {}",
            x.len(),
            bases.num_params()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut off = 0;
    for (lb, &(m, n1)) in bases.layers.iter().zip(&bases.shapes) {
        let block = &x[off..off + m * n1];
        match lb {
            None => out.extend_from_slice(block),
            Some(lb) => {
                let mat = Matrix::from_vec(m, n1, block.to_vec())?;
                let r = if forward {
                    lb.u.t_matmul(&mat).matmul(&lb.v)
                } else {
                    lb.u.matmul(&mat).matmul_t(&lb.v)
                };
                out.extend_from_slice(r.as_slice());
            }
        }
        off += m * n1;
    }
    Ok(out)
}

/// Standard basis → eigenbasis: `vec(Uᵀ Mat(u) V)` per layer.
pub fn to_hessian(u: &[f64], bases: &Bases) -> Result<Vec<f64>> {
    transform(u, bases, true)
}

/// Eigenbasis → standard basis: `vec(U Mat(v) Vᵀ)` per layer.
pub fn to_standard(v: &[f64], bases: &Bases) -> Result<Vec<f64>> {
    transform(v, bases, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormalize, vector};
    use crate::rng;

    fn random_orthogonal(n: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        orthonormalize(&Matrix::from_vec(n, n, rng::normal_vec(&mut r, n * n)).unwrap())
    }

    fn random_bases(dims: &[usize], seed: u64) -> Bases {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(p, w)| LayerBasis {
                u: random_orthogonal(w[1], seed + 2 * p as u64),
                v: random_orthogonal(w[0] + 1, seed + 2 * p as u64 + 1),
                out_values: vec![1.0; w[1]],
                in_values: vec![1.0; w[0] + 1],
            })
            .collect();
        Bases::from_layers(dims, layers).unwrap()
    }

    #[test]
    fn identity_is_a_no_op() {
        let b = Bases::identity(&[3, 2]);
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(to_hessian(&u, &b).unwrap(), u);
        assert_eq!(to_standard(&u, &b).unwrap(), u);
    }

    #[test]
    fn round_trip_and_isometry() {
        let dims = [5, 4, 3, 2];
        let b = random_bases(&dims, 1);
        let mut r = rng::seeded(9);
        let u = rng::normal_vec(&mut r, b.num_params());
        let v = to_hessian(&u, &b).unwrap();
        assert!((vector::norm(&v) - vector::norm(&u)).abs() < 1e-12);
        assert!(vector::max_abs_diff(&to_standard(&v, &b).unwrap(), &u) < 1e-12);
        assert!(to_hessian(&u[1..], &b).is_err());
    }
}
