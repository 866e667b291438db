use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::basis::to_hessian;
use super::objective::{r_term, BoundParams};
use super::step::step_rule;
use super::variants::{basis_strategy, Schedule};
use super::PacBayesState;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::network::{loss_and_grad_batch, MlpModel};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacBayesConfig {
    /// Basis strategy: `base`, `appr`, `iter` or `iter_m`.
    pub variant: String,
    /// Update rule: `sgd` or `rmsprop`.
    pub step_rule: String,
    pub tau: f64,
    pub iterations: usize,
    /// Epochs between basis recomputations.
    pub eta: usize,
    pub batch_size: usize,
    /// Multiply `tau` by `decay_factor` every this many iterations.
    pub decay_every: Option<usize>,
    pub decay_factor: f64,
    pub trace_every: usize,
    pub seed: u64,
    pub bound: BoundParams,
}

impl Default for PacBayesConfig {
    fn default() -> Self {
        Self {
            variant: "iter".into(),
            step_rule: "rmsprop".into(),
            tau: 0.001,
            iterations: 1000,
            eta: 10,
            batch_size: 128,
            decay_every: None,
            decay_factor: 0.1,
            trace_every: 100,
            seed: 0,
            bound: BoundParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Minibatch cross-entropy at the sampled weights.
    pub loss: f64,
    pub r: f64,
    pub objective: f64,
    pub kl: f64,
    pub varrho: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub state: PacBayesState,
    pub trace: Vec<TracePoint>,
    pub basis_updates: usize,
}

fn validate(cfg: &PacBayesConfig, state: &PacBayesState, data: &Dataset) -> Result<()> {
    if !(cfg.tau >= 0.0 && cfg.tau.is_finite()) {
        return Err(Error::Precondition(format!("tau = {} must be finite and non-negative", cfg.tau)));
    }
    if cfg.iterations == 0 || cfg.eta == 0 || cfg.batch_size == 0 || cfg.trace_every == 0 {
        return Err(Error::Precondition(
            "iterations, eta, batch_size and trace_every must be positive".into(),
        ));
    }
    if data.len() < 2 {
        return Err(Error::Precondition("training set needs at least two samples".into()));
    }
    if data.dim() != state.layer_dims[0] {
        return Err(Error::Dimension(format!(
            "dataset has {} features, model expects {}",
            data.dim(),
            state.layer_dims[0]
        )));
    }
    Ok(())
}

/// Stochastic optimization of `L(w′) + R(w, s, λ)` over the posterior mean,
/// log-variances and log prior scale, following the listed update: the
/// gradient of `R` ignores the dependence of the sample `w′` on `ς`.
pub fn optimize(state: &PacBayesState, data: &Dataset, cfg: &PacBayesConfig) -> Result<OptimizeOutcome> {
    validate(cfg, state, data)?;
    let strategy = basis_strategy(&cfg.variant)?;
    let mut rule = step_rule(&cfg.step_rule)?;
    let schedule = strategy.schedule(cfg.eta);
    let params = cfg.bound;
    let rho_max = params.varrho_max();

    let mut st = state.clone();
    st.varrho = st.varrho.min(rho_max);
    let p = st.num_params();
    let n = data.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let mut noise = rng::stream(cfg.seed, 0);
    let mut shuffler = rng::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut basis_updates = 0;
    let mut x = vec![0.0; 2 * p + 1];
    let mut grad = vec![0.0; 2 * p + 1];

    for t in 0..cfg.iterations {
        let slot = t % per_epoch;
        if slot == 0 {
            order.shuffle(&mut shuffler);
            let epoch = t / per_epoch;
            let due = match schedule {
                Schedule::Never => false,
                Schedule::Once => t == 0,
                Schedule::EveryEpochs(e) => epoch.is_multiple_of(e),
            };
            if due {
                st.bases = strategy.compute(&st.mean_model()?, data)?;
                basis_updates += 1;
            }
        }
        let idx = &order[slot * cfg.batch_size..((slot + 1) * cfg.batch_size).min(n)];
        let lr = match cfg.decay_every {
            Some(every) if every > 0 => cfg.tau * cfg.decay_factor.powi((t / every) as i32),
            _ => cfg.tau,
        };

        let xi = rng::normal_vec(&mut noise, p);
        let w_prime = st.perturbed(&xi)?;
        let model = MlpModel::from_flat(&st.layer_dims, &w_prime)?;
        let (loss, g) = loss_and_grad_batch(&model, &data.inputs, &data.labels, idx)?;
        if !loss.is_finite() {
            return Err(Error::Optimization {
                iteration: t,
                message: format!("surrogate loss is {loss}"),
            });
        }
        let r = r_term(&st.w, &st.varsigma, st.varrho, &st.theta0, n, &params)?;
        let gh = to_hessian(&g, &st.bases)?;

        if t % cfg.trace_every == 0 || t + 1 == cfg.iterations {
            trace.push(TracePoint {
                iteration: t,
                loss,
                r: r.value,
                objective: loss + r.value,
                kl: r.kl,
                varrho: st.varrho,
            });
        }

        x[..p].copy_from_slice(&st.w);
        x[p..2 * p].copy_from_slice(&st.varsigma);
        x[2 * p] = st.varrho;
        for i in 0..p {
            grad[i] = r.grad_w[i] + g[i];
            grad[p + i] = r.grad_varsigma[i] + gh[i] * xi[i] * st.varsigma[i].exp();
        }
        grad[2 * p] = r.grad_varrho;
        rule.step(&mut x, &grad, lr);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Optimization {
                iteration: t,
                message: "posterior parameters became non-finite".into(),
            });
        }
        st.w.copy_from_slice(&x[..p]);
        st.varsigma.copy_from_slice(&x[p..2 * p]);
        st.varrho = x[2 * p].min(rho_max);
    }
    Ok(OptimizeOutcome {
        state: st,
        trace,
        basis_updates,
    })
}
