mod common;

use common::{random_data, random_model};
use lhess::datasets::Dataset;
use lhess::linalg::Matrix;
use lhess::network::{
    checkpoint, error_rate, forward, grad, init_gaussian_rowscaled, init_xavier, logit_jacobian, loss, train_sgd, MlpModel, TrainConfig,
};

/// Smallest |z| over the hidden pre-activations of layers `from..`.
fn mask_margin(model: &MlpModel, x: &[f64], from: usize) -> f64 {
    let cache = forward(model, x, 0).unwrap();
    cache.pre_activations[from..cache.pre_activations.len() - 1]
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    let mut checked = 0;
    for seed in 0..20u64 {
        let model = random_model(&[5, 4, 3], seed);
        let data = random_data(1, 5, 3, seed);
        let (x, y) = data.sample(0);
        // A perturbation of size h must not flip any ReLU; resample otherwise.
        if mask_margin(&model, x, 0) < 1e-3 {
            continue;
        }
        let analytic = grad(&model, &forward(&model, x, y).unwrap());
        let flat = model.to_flat();
        let eval = |delta: f64, i: usize| {
            let mut f = flat.clone();
            f[i] += delta;
            loss(&forward(&MlpModel::from_flat(model.layer_dims(), &f).unwrap(), x, y).unwrap())
        };
        let fd: Vec<f64> = (0..flat.len()).map(|i| (eval(h, i) - eval(-h, i)) / (2.0 * h)).collect();
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = analytic.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-5 * scale, "seed {seed}: max error {err:e} vs scale {scale:e}");
        checked += 1;
    }
    assert!(checked >= 10, "too many samples near a ReLU kink");
}

/// Recomputes the logits from a perturbed `z^(p)`.
fn tail(model: &MlpModel, p: usize, z: &[f64]) -> Vec<f64> {
    let l = model.num_layers();
    let mut z = z.to_vec();
    for q in p + 1..l {
        let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        z = model.weight(q).matvec(&h);
        for (v, b) in z.iter_mut().zip(model.bias(q)) {
            *v += b;
        }
    }
    z
}

#[test]
fn logit_jacobian_matches_finite_differences() {
    let h = 1e-6;
    for seed in 0..8u64 {
        let model = random_model(&[6, 5, 4, 3], seed);
        let data = random_data(1, 6, 3, seed + 100);
        let (x, y) = data.sample(0);
        if mask_margin(&model, x, 0) < 1e-3 {
            continue;
        }
        let cache = forward(&model, x, y).unwrap();
        for p in 0..model.num_layers() {
            let g = logit_jacobian(&model, &cache, p).unwrap();
            let z = &cache.pre_activations[p];
            for j in 0..z.len() {
                let (mut up, mut dn) = (z.clone(), z.clone());
                up[j] += h;
                dn[j] -= h;
                let (a, b) = (tail(&model, p, &up), tail(&model, p, &dn));
                for i in 0..a.len() {
                    let fd = (a[i] - b[i]) / (2.0 * h);
                    assert!(
                        (fd - g[(i, j)]).abs() < 1e-6,
                        "seed {seed} layer {p} ({i},{j}): {fd} vs {}",
                        g[(i, j)]
                    );
                }
            }
        }
    }
}

#[test]
fn separable_two_class_set_is_learned() {
    let n = 40;
    let inputs = Matrix::from_fn(n, 2, |i, j| {
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let t = i as f64 / n as f64;
        if j == 0 {
            side * (0.5 + t)
        } else {
            (7.0 * t).sin()
        }
    });
    let labels = (0..n).map(|i| i % 2).collect();
    let data = Dataset::new(inputs, labels, 2, "separable").unwrap();
    let init = init_xavier(&[2, 8, 2], 3).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        lr: 0.1,
        ..Default::default()
    };
    let out = train_sgd(&init, &data, &cfg).unwrap();
    assert_eq!(error_rate(&out.model, &data.inputs, &data.labels).unwrap(), 0.0);
}

#[test]
fn initializer_moments() {
    let m = init_xavier(&[784, 200], 1).unwrap();
    let w = m.weight(0).as_slice();
    let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
    let target = 2.0 / (784.0 + 200.0);
    assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");

    let g = init_gaussian_rowscaled(&[4096, 64, 10], 2).unwrap();
    let w1 = g.weight(0);
    for i in 0..w1.rows() {
        let norm = w1.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((0.9..=1.1).contains(&norm), "row {i}: {norm}");
    }
    let w2 = g.weight(1).as_slice();
    let var = w2.iter().map(|v| v * v).sum::<f64>() / w2.len() as f64;
    assert!((var * 64.0 - 1.0).abs() < 0.1);
}

#[test]
fn checkpoint_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(&[7, 5, 3], 9);
    let path = dir.path().join("m.ckpt");
    checkpoint::save_model(&path, &model, 9, 12).unwrap();
    let (back, header) = checkpoint::load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!((header.seed, header.epoch), (9, 12));

    let mat = common::random_matrix(3, 4, 1);
    let mpath = dir.path().join("a.bin");
    checkpoint::save_matrix(&mpath, &mat).unwrap();
    assert_eq!(checkpoint::load_matrix(&mpath).unwrap(), mat);
}
