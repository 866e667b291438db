use serde::{Deserialize, Serialize};

use super::objective::{kl_q_p, BoundParams};
use super::PacBayesState;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::network::{error_rate, MlpModel};
use crate::{parallel, rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// Posterior samples drawn for the Monte-Carlo error estimate.
    pub mc_iters: usize,
    /// A running estimate is recorded every `mc_freq` samples.
    pub mc_freq: usize,
    pub delta_prime: f64,
    pub seed: u64,
    pub bound: BoundParams,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            mc_iters: 1000,
            mc_freq: 100,
            delta_prime: 0.01,
            seed: 0,
            bound: BoundParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McPoint {
    pub samples: usize,
    pub snn_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub pac_bound: f64,
    pub kl_divergence: f64,
    /// Monte-Carlo SNN 0-1 error on the training set.
    pub snn_error: f64,
    /// Upper confidence bound on the SNN training error.
    pub snn_error_bound: f64,
    /// `½ log λ` of the rounded prior variance.
    pub lambda_log: f64,
    pub lambda_index: u64,
    /// 0-1 error of the mean network on the test set.
    pub test_error: f64,
    pub train_error: f64,
    /// Monte-Carlo SNN 0-1 error on the test set.
    pub snn_test_error: f64,
    pub mc_samples: usize,
    pub mc_trace: Vec<McPoint>,
}

/// Bernoulli `KL(q‖p)` with `0 log 0 = 0`.
pub fn kl_bernoulli(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(q, p) + term(1.0 - q, 1.0 - p)
}

/// `max{p ∈ [q, 1] : KL(q‖p) ≤ budget}` by bisection.
pub fn kl_inverse(q: f64, budget: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    if !(budget > 0.0) || q >= 1.0 {
        return q;
    }
    let (mut lo, mut hi) = (q, 1.0);
    for _ in 0..200 {
        if hi - lo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if kl_bernoulli(q, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Nearest grid index `j ≥ 1` and `λ_j = c_λ e^{−j/b}`.
pub fn round_lambda(lambda: f64, params: &BoundParams) -> Result<(u64, f64)> {
    if !(lambda > 0.0 && lambda < params.c_lambda) {
        return Err(Error::Domain(format!("prior variance {lambda} outside (0, {})", params.c_lambda)));
    }
    let j = (params.b_prec * (params.c_lambda / lambda).ln()).round();
    if j < 1.0 {
        return Err(Error::Domain(format!("prior variance {lambda} rounds to the grid edge")));
    }
    Ok((j as u64, params.c_lambda * (-j / params.b_prec).exp()))
}

/// Certified bound on the SNN's expected 0-1 error.
pub fn final_bound(state: &PacBayesState, train: &Dataset, test: &Dataset, cfg: &BoundConfig) -> Result<BoundReport> {
    if cfg.mc_iters == 0 || cfg.mc_freq == 0 {
        return Err(Error::Precondition("mc_iters and mc_freq must be positive".into()));
    }
    if !(cfg.delta_prime > 0.0 && cfg.delta_prime < 1.0) {
        return Err(Error::Precondition(format!("delta_prime = {} outside (0, 1)", cfg.delta_prime)));
    }
    let params = &cfg.bound;
    let (j, lambda) = round_lambda(state.lambda(), params)?;
    let varrho = 0.5 * lambda.ln();
    let kl = kl_q_p(&state.w, &state.varsigma, varrho, &state.theta0);
    let n = train.len();
    let budget = (kl + params.penalty(n, lambda)?) / (n as f64 - 1.0);

    let p = state.num_params();
    let samples = parallel::map_ordered(cfg.mc_iters, |i| -> Result<(f64, f64)> {
        let mut r = rng::stream(cfg.seed, (1 << 32) + i as u64);
        let xi = rng::normal_vec(&mut r, p);
        let model = MlpModel::from_flat(&state.layer_dims, &state.perturbed(&xi)?)?;
        Ok((
            error_rate(&model, &train.inputs, &train.labels)?,
            error_rate(&model, &test.inputs, &test.labels)?,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut mc_trace = Vec::new();
    let mut acc = 0.0;
    for (i, (e, _)) in samples.iter().enumerate() {
        acc += e;
        if (i + 1) % cfg.mc_freq == 0 {
            mc_trace.push(McPoint {
                samples: i + 1,
                snn_error: acc / (i + 1) as f64,
            });
        }
    }
    let m = cfg.mc_iters as f64;
    let snn_error = acc / m;
    let snn_test_error = samples.iter().map(|s| s.1).sum::<f64>() / m;
    let snn_error_bound = kl_inverse(snn_error, (2.0 / cfg.delta_prime).ln() / m);
    let pac_bound = kl_inverse(snn_error_bound, budget);
    let mean = state.mean_model()?;
    Ok(BoundReport {
        pac_bound,
        kl_divergence: kl,
        snn_error,
        snn_error_bound,
        lambda_log: varrho,
        lambda_index: j,
        test_error: error_rate(&mean, &test.inputs, &test.labels)?,
        train_error: error_rate(&mean, &train.inputs, &train.labels)?,
        snn_test_error,
        mc_samples: cfg.mc_iters,
        mc_trace,
    })
}
