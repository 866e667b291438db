use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence and prior-grid constants of the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub delta: f64,
    /// Grid precision `b`: prior variances are `c_λ exp(−j/b)`.
    pub b_prec: f64,
    /// Upper bound `c_λ` on the prior variance.
    pub c_lambda: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            delta: 0.025,
            b_prec: 100.0,
            c_lambda: 0.1,
        }
    }
}

impl BoundParams {
    /// Largest admissible `ϱ`: keeps `λ ≤ c_λ e^{−1/b}`, so the rounded grid
    /// index is at least 1.
    pub fn varrho_max(&self) -> f64 {
        0.5 * (self.c_lambda.ln() - 1.0 / self.b_prec)
    }

    /// `log(π² |S| / (6δ))` plus the grid penalty `2 log(b log(c_λ/λ))`.
    pub fn penalty(&self, n_train: usize, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda < self.c_lambda) {
            return Err(Error::Domain(format!("prior variance {lambda} outside (0, {})", self.c_lambda)));
        }
        let grid = self.b_prec * (self.c_lambda / lambda).ln();
        let union = (std::f64::consts::PI.powi(2) * n_train as f64 / (6.0 * self.delta)).ln();
        Ok(2.0 * grid.ln() + union)
    }
}

/// `KL(Q‖P)` for `Q = N(w, B diag(e^{2ς}) Bᵀ)`, `P = N(θ_0, e^{2ϱ} I)`. The
/// prior is isotropic, so neither the basis `B` nor the basis of `w − θ_0`
/// matters.
pub fn kl_q_p(w: &[f64], varsigma: &[f64], varrho: f64, theta0: &[f64]) -> f64 {
    let lambda = (2.0 * varrho).exp();
    let p = w.len() as f64;
    let sum_s: f64 = varsigma.iter().map(|v| (2.0 * v).exp()).sum();
    let dist: f64 = w.iter().zip(theta0).map(|(a, b)| (a - b).powi(2)).sum();
    // Σ log(λ/s_i) = 2 Σ (ϱ − ς_i)
    let log_ratio: f64 = varsigma.iter().map(|v| 2.0 * (varrho - v)).sum();
    0.5 * ((sum_s + dist) / lambda - p + log_ratio)
}

/// `B_RE = [KL + 2 log(b log(c_λ/λ)) + log(π²|S|/(6δ))] / (|S| − 1)`.
pub fn b_re(kl: f64, n_train: usize, varrho: f64, params: &BoundParams) -> Result<f64> {
    if n_train < 2 {
        return Err(Error::Precondition("the bound needs at least two training samples".into()));
    }
    let lambda = (2.0 * varrho).exp();
    Ok((kl + params.penalty(n_train, lambda)?) / (n_train as f64 - 1.0))
}

/// `R = sqrt(B_RE / 2)` and its gradients.
#[derive(Clone, Debug)]
pub struct RTerm {
    pub kl: f64,
    pub bre: f64,
    pub value: f64,
    pub grad_w: Vec<f64>,
    pub grad_varsigma: Vec<f64>,
    pub grad_varrho: f64,
}

pub fn r_term(w: &[f64], varsigma: &[f64], varrho: f64, theta0: &[f64], n_train: usize, params: &BoundParams) -> Result<RTerm> {
    let kl = kl_q_p(w, varsigma, varrho, theta0);
    let bre = b_re(kl, n_train, varrho, params)?;
    if !(bre > 0.0 && bre.is_finite()) {
        return Err(Error::Domain(format!("B_RE = {bre} is not a positive finite number")));
    }
    let value = (0.5 * bre).sqrt();
    let lambda = (2.0 * varrho).exp();
    // dR/dKL = dR/dB · dB/dKL = 1/(4R) · 1/(|S| − 1)
    let scale = 1.0 / (4.0 * value * (n_train as f64 - 1.0));
    let grad_w: Vec<f64> = w.iter().zip(theta0).map(|(a, b)| scale * (a - b) / lambda).collect();
    let mut sum_s = 0.0;
    let grad_varsigma: Vec<f64> = varsigma
        .iter()
        .map(|v| {
            let s = (2.0 * v).exp();
            sum_s += s;
            scale * (s / lambda - 1.0)
        })
        .collect();
    let dist: f64 = w.iter().zip(theta0).map(|(a, b)| (a - b).powi(2)).sum();
    let dkl_drho = w.len() as f64 - (sum_s + dist) / lambda;
    let dgrid_drho = -4.0 / (params.c_lambda.ln() - 2.0 * varrho);
    Ok(RTerm {
        kl,
        bre,
        value,
        grad_w,
        grad_varsigma,
        grad_varrho: scale * (dkl_drho + dgrid_drho),
    })
}
