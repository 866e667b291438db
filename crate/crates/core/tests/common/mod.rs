#![allow(dead_code)]

use lhess::datasets::Dataset;
use lhess::linalg::Matrix;
use lhess::network::MlpModel;
use lhess::rng;
use rand::Rng;

/// Gaussian weights scaled by `1/√fan_in` and small random biases.
pub fn random_model(dims: &[usize], seed: u64) -> MlpModel {
    let mut r = rng::seeded(seed);
    let mut model = MlpModel::zeros(dims).unwrap();
    for p in 0..model.num_layers() {
        let (m, n) = model.layer_shape(p);
        let w = rng::normal_vec(&mut r, m * n);
        let s = 1.0 / (n as f64).sqrt();
        *model.weight_mut(p) = Matrix::from_vec(m, n, w.iter().map(|v| v * s).collect()).unwrap();
        for b in model.bias_mut(p) {
            *b = 0.1 * r.random_range(-1.0..1.0);
        }
    }
    model
}

pub fn random_data(n: usize, dim: usize, classes: usize, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed ^ 0xdada);
    let inputs = Matrix::from_vec(n, dim, rng::normal_vec(&mut r, n * dim)).unwrap();
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    Dataset::new(inputs, labels, classes, "toy").unwrap()
}

pub fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    let a = Matrix::from_vec(n, n, rng::normal_vec(&mut r, n * n)).unwrap();
    a.add(&a.transpose()).scale(0.5)
}

pub fn random_psd(n: usize, rank: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    let b = Matrix::from_vec(n, rank, rng::normal_vec(&mut r, n * rank)).unwrap();
    b.matmul_t(&b)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    Matrix::from_vec(rows, cols, rng::normal_vec(&mut r, rows * cols)).unwrap()
}

/// Empirical mean cross-entropy over the dataset.
pub fn empirical_loss(model: &MlpModel, data: &Dataset) -> f64 {
    lhess::network::dataset_loss(model, &data.inputs, &data.labels).unwrap()
}
