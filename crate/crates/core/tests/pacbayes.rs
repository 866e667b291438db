mod common;

use common::{random_data, random_model};
use lhess::datasets::Dataset;
use lhess::linalg::{sym_eig_dense, vector, Matrix};
use lhess::metrics::spearman;
use lhess::network::{error_rate, forward, init_xavier, train_sgd, MlpModel, TrainConfig};
use lhess::pacbayes::{
    basis_strategy, final_bound, kl_inverse, kl_q_p, optimize, round_lambda, to_hessian, to_standard, BoundConfig, BoundParams,
    PacBayesConfig, PacBayesState,
};
use lhess::rng;

/// Gaussian inputs labelled by a random teacher network.
fn teacher_data(n: usize, dim: usize, seed: u64) -> Dataset {
    let teacher = random_model(&[dim, 8, 2], 1000 + seed);
    let mut d = random_data(n, dim, 2, seed);
    d.labels = (0..n)
        .map(|i| {
            let c = forward(&teacher, d.sample(i).0, 0).unwrap();
            usize::from(c.probs[1] > c.probs[0])
        })
        .collect();
    d
}

fn trained_state(dims: &[usize], train: &Dataset, seed: u64, epochs: usize) -> PacBayesState {
    let init = init_xavier(dims, seed).unwrap();
    let cfg = TrainConfig {
        epochs,
        lr: 0.05,
        batch_size: 16,
        momentum: 0.9,
        seed,
        ..Default::default()
    };
    let out = train_sgd(&init, train, &cfg).unwrap();
    PacBayesState::new(&out.model, &init).unwrap()
}

fn toy_config(variant: &str, iterations: usize, seed: u64) -> PacBayesConfig {
    PacBayesConfig {
        variant: variant.into(),
        iterations,
        eta: 2,
        batch_size: 32,
        trace_every: 1,
        seed,
        ..Default::default()
    }
}

/// Columns `B e_i`: the posterior eigenbasis in standard coordinates.
fn basis_matrix(state: &PacBayesState) -> Matrix {
    let p = state.num_params();
    let cols: Vec<Vec<f64>> = (0..p).map(|i| to_standard(&vector::basis(p, i), &state.bases).unwrap()).collect();
    Matrix::from_columns(&cols).unwrap()
}

#[test]
fn kl_matches_dense_gaussians_on_a_12_parameter_net() {
    let dims = [2, 2, 2];
    let data = random_data(40, 2, 2, 1);
    let w = random_model(&dims, 2);
    let theta0 = random_model(&dims, 3);
    let mut state = PacBayesState::new(&w, &theta0).unwrap();
    assert_eq!(state.num_params(), 12);
    state.bases = basis_strategy("iter").unwrap().compute(&w, &data).unwrap();
    let mut r = rng::seeded(4);
    state.varsigma = rng::normal_vec(&mut r, 12).iter().map(|v| 0.3 * v - 1.0).collect();
    state.varrho = -0.9;

    let b = basis_matrix(&state);
    assert!(b.t_matmul(&b).max_abs_diff(&Matrix::identity(12)) < 1e-10);
    let cov_q = b.matmul(&Matrix::diag(&state.variances())).matmul_t(&b);
    let lambda = state.lambda();
    let d = vector::sub(&state.w, &state.theta0);
    let logdet_q: f64 = sym_eig_dense(&cov_q.symmetrize()).unwrap().values.iter().map(|v| v.ln()).sum();
    let brute = 0.5 * (cov_q.trace() / lambda + vector::dot(&d, &d) / lambda - 12.0 + 12.0 * lambda.ln() - logdet_q);
    assert!((brute - state.kl()).abs() < 1e-9, "{brute} vs {}", state.kl());

    // The isotropic prior makes the mean term basis-free.
    let dh = to_hessian(&d, &state.bases).unwrap();
    assert!((vector::norm(&dh) - vector::norm(&d)).abs() < 1e-10);
    let kl_h = kl_q_p(&dh, &state.varsigma, state.varrho, &[0.0; 12]);
    assert!((kl_h - state.kl()).abs() < 1e-10);
}

#[test]
fn zero_step_size_leaves_the_posterior_unchanged() {
    let train = teacher_data(120, 4, 0);
    let state = trained_state(&[4, 5, 2], &train, 0, 5);
    for variant in ["base", "appr", "iter", "iter_m"] {
        let cfg = PacBayesConfig {
            tau: 0.0,
            ..toy_config(variant, 20, 1)
        };
        let out = optimize(&state, &train, &cfg).unwrap();
        assert_eq!(out.state.w, state.w, "{variant}");
        assert_eq!(out.state.varsigma, state.varsigma, "{variant}");
        assert_eq!(out.state.varrho, state.varrho, "{variant}");
    }
}

#[test]
fn initialization_follows_the_algorithm() {
    let w = random_model(&[3, 2], 1);
    let s = PacBayesState::new(&w, &random_model(&[3, 2], 2)).unwrap();
    assert_eq!(s.varrho, -3.0);
    for (v, x) in s.varsigma.iter().zip(w.to_flat()) {
        assert!((v - x.abs().ln()).abs() < 1e-15);
    }
    assert!(s.bases.is_identity());
}

#[test]
fn objective_decreases_over_the_first_100_iterations() {
    let mut drops = Vec::new();
    for seed in 0..5u64 {
        let train = teacher_data(300, 5, seed);
        let state = trained_state(&[5, 8, 2], &train, seed, 20);
        let out = optimize(&state, &train, &toy_config("iter", 100, seed)).unwrap();
        let obj: Vec<f64> = out.trace.iter().map(|t| t.objective).collect();
        assert_eq!(obj.len(), 100);
        let head = obj[..20].iter().sum::<f64>() / 20.0;
        let tail = obj[80..].iter().sum::<f64>() / 20.0;
        drops.push(head - tail);
    }
    drops.sort_by(f64::total_cmp);
    assert!(drops[2] > 0.0, "{drops:?}");
}

#[test]
fn basis_schedules() {
    let train = teacher_data(64, 4, 2);
    let state = trained_state(&[4, 5, 2], &train, 2, 3);
    // 64 samples / batch 32 = 2 iterations per epoch; 12 iterations = 6 epochs.
    let count = |v: &str| optimize(&state, &train, &toy_config(v, 12, 0)).unwrap().basis_updates;
    assert_eq!(count("base"), 0);
    assert_eq!(count("appr"), 1);
    assert_eq!(count("iter"), 3);
    assert_eq!(count("iter_m"), 3);
}

#[test]
fn non_finite_loss_is_an_optimization_error() {
    let mut train = teacher_data(64, 4, 3);
    let state = trained_state(&[4, 5, 2], &train, 3, 2);
    train.inputs.as_mut_slice()[0] = f64::NAN;
    let err = optimize(&state, &train, &toy_config("base", 10, 0)).unwrap_err();
    assert_eq!(err.kind(), "optimization");
}

#[test]
fn bound_is_valid_on_held_out_data() {
    let mut valid = 0;
    let mut details = Vec::new();
    for run in 0..20u64 {
        let train = teacher_data(300, 5, run);
        let test = {
            let mut t = teacher_data(1000, 5, run);
            // Same teacher, fresh inputs.
            let fresh = random_data(1000, 5, 2, 5000 + run);
            let teacher = random_model(&[5, 8, 2], 1000 + run);
            t.inputs = fresh.inputs;
            t.labels = (0..1000)
                .map(|i| {
                    let c = forward(&teacher, t.sample(i).0, 0).unwrap();
                    usize::from(c.probs[1] > c.probs[0])
                })
                .collect();
            t
        };
        let state = trained_state(&[5, 8, 2], &train, run, 20);
        let variant = if run % 2 == 0 { "base" } else { "iter" };
        let out = optimize(&state, &train, &toy_config(variant, 200, run)).unwrap();
        let bc = BoundConfig {
            mc_iters: 100,
            mc_freq: 20,
            seed: run,
            ..Default::default()
        };
        let r = final_bound(&out.state, &train, &test, &bc).unwrap();
        assert!((0.0..=1.0).contains(&r.pac_bound));
        assert!(r.pac_bound >= r.snn_error_bound && r.snn_error_bound >= r.snn_error);
        assert_eq!(r.mc_trace.len(), 5);
        if r.pac_bound >= r.snn_test_error {
            valid += 1;
        }
        details.push((r.pac_bound, r.snn_test_error));
    }
    assert!(valid >= 19, "{details:?}");
}

#[test]
fn zero_kl_perfect_classifier_bound() {
    // Wide-margin teacher used as both prior and posterior mean.
    let mut teacher = random_model(&[3, 4, 2], 7);
    for p in 0..2 {
        *teacher.weight_mut(p) = teacher.weight(p).scale(50.0);
    }
    let mut data = random_data(400, 3, 2, 7);
    data.labels = (0..400)
        .map(|i| usize::from(forward(&teacher, data.sample(i).0, 0).unwrap().probs[1] > 0.5))
        .collect();
    assert_eq!(error_rate(&teacher, &data.inputs, &data.labels).unwrap(), 0.0);

    let params = BoundParams::default();
    let j = 600u64;
    let varrho = 0.5 * (params.c_lambda * (-(j as f64) / params.b_prec).exp()).ln();
    let mut state = PacBayesState::new(&teacher, &teacher).unwrap();
    state.varrho = varrho;
    state.varsigma = vec![varrho; state.num_params()];
    let cfg = BoundConfig {
        mc_iters: 50,
        mc_freq: 10,
        ..Default::default()
    };
    let r = final_bound(&state, &data, &data, &cfg).unwrap();
    assert_eq!(r.lambda_index, j);
    assert!(r.kl_divergence.abs() < 1e-9);
    let (_, lam) = round_lambda(state.lambda(), &params).unwrap();
    let budget = params.penalty(400, lam).unwrap() / 399.0;
    assert!((r.pac_bound - kl_inverse(r.snn_error_bound, budget)).abs() < 1e-12);
    assert!(r.pac_bound < 1.0);
}

#[test]
fn optimized_variances_shrink_along_sharp_directions() {
    let train = teacher_data(400, 5, 11);
    let state = trained_state(&[5, 8, 2], &train, 11, 30);
    // A small step barely moves ς away from log|w| in 600 iterations.
    let cfg = PacBayesConfig {
        tau: 0.01,
        ..toy_config("iter", 600, 11)
    };
    let out = optimize(&state, &train, &cfg).unwrap();
    let values = out.state.bases.coordinate_values();
    let (ev, s): (Vec<f64>, Vec<f64>) = values
        .iter()
        .zip(out.state.variances())
        .filter_map(|(v, s)| v.map(|v| (v, s)))
        .unzip();
    let rho = spearman(&ev, &s).unwrap();
    eprintln!("spearman(eigenvalue, s) = {rho:.3}");
    assert!(rho < -0.2, "{rho}");
}

#[test]
fn perturbation_uses_the_posterior_basis() {
    let dims = [3, 3, 2];
    let data = random_data(30, 3, 2, 0);
    let w = random_model(&dims, 0);
    let mut state = PacBayesState::new(&w, &w).unwrap();
    state.bases = basis_strategy("iter").unwrap().compute(&w, &data).unwrap();
    let xi = vector::basis(state.num_params(), 4);
    let got = state.perturbed(&xi).unwrap();
    let expect: Vec<f64> = to_standard(&xi, &state.bases)
        .unwrap()
        .iter()
        .zip(&state.w)
        .map(|(d, w)| w + d * state.varsigma[4].exp())
        .collect();
    assert!(vector::max_abs_diff(&got, &expect) < 1e-14);
    let _ = MlpModel::from_flat(&dims, &got).unwrap();
}
