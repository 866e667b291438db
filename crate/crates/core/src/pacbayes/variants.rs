//! Where the posterior's eigenbasis comes from, and how often it is rebuilt.

use super::basis::{Bases, LayerBasis};
use crate::datasets::Dataset;
use crate::error::Result;
use crate::hessian::{closed_form_output_hessian, expected_softmax_hessian, layer_factors, layer_moments};
use crate::linalg::eigensolver;
use crate::network::MlpModel;
use crate::registry::Registry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Never,
    /// Before the first iteration only.
    Once,
    /// At the start of every `n`-th epoch.
    EveryEpochs(usize),
}

pub trait BasisStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn schedule(&self, eta: usize) -> Schedule;
    fn compute(&self, model: &MlpModel, data: &Dataset) -> Result<Bases>;
}

/// Standard basis throughout.
#[derive(Debug, Default)]
pub struct Base;
/// Exact Kronecker-factor eigenbases, computed once.
#[derive(Debug, Default)]
pub struct Appr;
/// Exact eigenbases recomputed every `η` epochs at the current mean.
#[derive(Debug, Default)]
pub struct Iter;
/// As [`Iter`], with the output factor replaced by its closed form
/// `4^{−h} Sᵀ E[A] S`.
#[derive(Debug, Default)]
pub struct IterM;

fn exact_bases(model: &MlpModel, data: &Dataset) -> Result<Bases> {
    let layers = (0..model.num_layers())
        .map(|p| {
            let f = layer_factors(model, data, p, true)?;
            Ok(LayerBasis {
                u: f.out_eig.vectors,
                v: f.in_eig.vectors,
                out_values: f.out_eig.values,
                in_values: f.in_eig.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Bases::from_layers(model.layer_dims(), layers)
}

fn closed_form_bases(model: &MlpModel, data: &Dataset) -> Result<Bases> {
    let solver = eigensolver("auto")?;
    let a_tilde = expected_softmax_hessian(model, data)?;
    let layers = (0..model.num_layers())
        .map(|p| {
            let (_, autocorr, _) = layer_moments(model, data, p, true)?;
            let out = solver.solve(&closed_form_output_hessian(model, p, &a_tilde)?)?;
            let inp = solver.solve(&autocorr)?;
            Ok(LayerBasis {
                u: out.vectors,
                v: inp.vectors,
                out_values: out.values,
                in_values: inp.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Bases::from_layers(model.layer_dims(), layers)
}

impl BasisStrategy for Base {
    fn name(&self) -> &'static str {
        "base"
    }
    fn schedule(&self, _eta: usize) -> Schedule {
        Schedule::Never
    }
    fn compute(&self, model: &MlpModel, _data: &Dataset) -> Result<Bases> {
        Ok(Bases::identity(model.layer_dims()))
    }
}

impl BasisStrategy for Appr {
    fn name(&self) -> &'static str {
        "appr"
    }
    fn schedule(&self, _eta: usize) -> Schedule {
        Schedule::Once
    }
    fn compute(&self, model: &MlpModel, data: &Dataset) -> Result<Bases> {
        exact_bases(model, data)
    }
}

impl BasisStrategy for Iter {
    fn name(&self) -> &'static str {
        "iter"
    }
    fn schedule(&self, eta: usize) -> Schedule {
        Schedule::EveryEpochs(eta)
    }
    fn compute(&self, model: &MlpModel, data: &Dataset) -> Result<Bases> {
        exact_bases(model, data)
    }
}

impl BasisStrategy for IterM {
    fn name(&self) -> &'static str {
        "iter_m"
    }
    fn schedule(&self, eta: usize) -> Schedule {
        Schedule::EveryEpochs(eta)
    }
    fn compute(&self, model: &MlpModel, data: &Dataset) -> Result<Bases> {
        closed_form_bases(model, data)
    }
}

pub fn basis_strategies() -> Registry<dyn BasisStrategy> {
    let mut reg: Registry<dyn BasisStrategy> = Registry::new("pac-bayes variant");
    reg.register("base", || Box::new(Base))
        .register("appr", || Box::new(Appr))
        .register("iter", || Box::new(Iter))
        .register("iter_m", || Box::new(IterM));
    reg
}

pub fn basis_strategy(name: &str) -> Result<Box<dyn BasisStrategy>> {
    basis_strategies().create(name)
}
