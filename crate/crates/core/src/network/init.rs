//! Weight initialization strategies.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::MlpModel;
use crate::error::Result;
use crate::registry::Registry;
use crate::rng;

pub trait Initializer: Send + Sync {
    fn name(&self) -> &'static str;
    fn init(&self, layer_dims: &[usize], seed: u64) -> Result<MlpModel>;
}

/// Uniform on `±√(6 / (m + n))` per layer, zero biases.
#[derive(Clone, Copy, Debug, Default)]
pub struct Xavier;

/// `W_ij ~ N(0, 1/n)` for an `m × n` layer, zero biases.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianRowScaled;

impl Initializer for Xavier {
    fn name(&self) -> &'static str {
        "xavier"
    }

    fn init(&self, layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
        let mut model = MlpModel::zeros(layer_dims)?;
        let mut r = rng::seeded(seed);
        for p in 0..model.num_layers() {
            let (m, n) = model.layer_shape(p);
            let a = (6.0 / (m + n) as f64).sqrt();
            for v in model.weight_mut(p).as_mut_slice() {
                *v = r.random_range(-a..a);
            }
        }
        Ok(model)
    }
}

impl Initializer for GaussianRowScaled {
    fn name(&self) -> &'static str {
        "gaussian-rowscaled"
    }

    fn init(&self, layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
        let mut model = MlpModel::zeros(layer_dims)?;
        let mut r = rng::seeded(seed);
        for p in 0..model.num_layers() {
            let (_, n) = model.layer_shape(p);
            let dist = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("positive std");
            for v in model.weight_mut(p).as_mut_slice() {
                *v = dist.sample(&mut r);
            }
        }
        Ok(model)
    }
}

pub fn initializers() -> Registry<dyn Initializer> {
    let mut reg: Registry<dyn Initializer> = Registry::new("initializer");
    reg.register("xavier", || Box::new(Xavier))
        .register("gaussian-rowscaled", || Box::new(GaussianRowScaled));
    reg
}

pub fn initializer(name: &str) -> Result<Box<dyn Initializer>> {
    initializers().create(name)
}

pub fn init_xavier(layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
    Xavier.init(layer_dims, seed)
}

pub fn init_gaussian_rowscaled(layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
    GaussianRowScaled.init(layer_dims, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_bounds_and_determinism() {
        let a = init_xavier(&[30, 20, 10], 4).unwrap();
        assert_eq!(a, init_xavier(&[30, 20, 10], 4).unwrap());
        assert_ne!(a, init_xavier(&[30, 20, 10], 5).unwrap());
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(a.weight(0).max_abs() <= bound);
        assert!(a.bias(0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn gaussian_rowscaled_variance() {
        let m = init_gaussian_rowscaled(&[400, 300], 9).unwrap();
        let w = m.weight(0).as_slice();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        // 120k draws: relative std of the variance estimate is ~0.4%
        assert!((var * 400.0 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(initializer("xavier").unwrap().name(), "xavier");
        assert!(initializer("orthogonal").is_err());
    }
}
