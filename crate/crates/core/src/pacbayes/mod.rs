//! PAC-Bayes bound optimization with posteriors that are diagonal in the
//! layer-wise Hessian eigenbasis.
//!
//! The posterior is `Q = N(w, B diag(s) Bᵀ)` where `B` is the per-layer
//! orthonormal change of basis `u ↦ vec(U Mat(u) Vᵀ)` and `s = exp(2ς)`;
//! the prior is `P = N(θ_0, λ I)` with `λ = exp(2ϱ)`.

mod basis;
mod bound;
mod objective;
mod optimize;
mod step;
mod variants;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::MlpModel;

pub use basis::{to_hessian, to_standard, Bases, LayerBasis};
pub use bound::{final_bound, kl_bernoulli, kl_inverse, round_lambda, BoundConfig, BoundReport};
pub use objective::{b_re, kl_q_p, r_term, BoundParams, RTerm};
pub use optimize::{optimize, OptimizeOutcome, PacBayesConfig, TracePoint};
pub use step::{step_rule, step_rules, RmsProp, Sgd, StepRule};
pub use variants::{basis_strategies, basis_strategy, Appr, Base, BasisStrategy, Iter, IterM, Schedule};

/// Initial log prior standard deviation.
pub const VARRHO_INIT: f64 = -3.0;
/// Floor on `|w|` when initializing `ς = log|w|`, so zero weights get a
/// finite (tiny) variance.
pub const ABS_W_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacBayesState {
    pub layer_dims: Vec<usize>,
    /// Posterior mean, standard basis.
    pub w: Vec<f64>,
    /// Log posterior standard deviations, Hessian eigenbasis.
    pub varsigma: Vec<f64>,
    /// Log prior standard deviation.
    pub varrho: f64,
    /// Prior mean (the random initialization).
    pub theta0: Vec<f64>,
    #[serde(skip)]
    pub bases: Bases,
}

impl PacBayesState {
    /// `ς = log|w|`, `ϱ = −3`, identity bases.
    pub fn new(w: &MlpModel, theta0: &MlpModel) -> Result<Self> {
        if w.layer_dims() != theta0.layer_dims() {
            return Err(Error::Precondition(format!(
                "posterior mean {:?} and prior mean {:?} have different architectures",
                w.layer_dims(),
                theta0.layer_dims()
            )));
        }
        let wf = w.to_flat();
        Ok(Self {
            layer_dims: w.layer_dims().to_vec(),
            varsigma: wf.iter().map(|v| v.abs().max(ABS_W_FLOOR).ln()).collect(),
            w: wf,
            varrho: VARRHO_INIT,
            theta0: theta0.to_flat(),
            bases: Bases::identity(w.layer_dims()),
        })
    }

    pub fn num_params(&self) -> usize {
        self.w.len()
    }

    pub fn lambda(&self) -> f64 {
        (2.0 * self.varrho).exp()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.varsigma.iter().map(|v| (2.0 * v).exp()).collect()
    }

    pub fn kl(&self) -> f64 {
        kl_q_p(&self.w, &self.varsigma, self.varrho, &self.theta0)
    }

    pub fn mean_model(&self) -> Result<MlpModel> {
        MlpModel::from_flat(&self.layer_dims, &self.w)
    }

    /// `w + B(ξ ⊙ exp(ς))`.
    pub fn perturbed(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = xi.iter().zip(&self.varsigma).map(|(x, s)| x * s.exp()).collect();
        let mut out = to_standard(&scaled, &self.bases)?;
        crate::linalg::vector::axpy(1.0, &self.w, &mut out);
        Ok(out)
    }
}
