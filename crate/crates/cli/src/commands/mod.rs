use std::path::{Path, PathBuf};

use lhess::network::{checkpoint, MlpModel};
use lhess::registry::Registry;
use serde::Serialize;

use crate::config::Overrides;
use crate::error::{CliError, CliResult};

mod correspondence;
mod overlap;
mod pacbayes;
mod spectra;
mod theorem;
mod train;

pub use correspondence::CorrespondenceCommand;
pub use overlap::OverlapCommand;
pub use pacbayes::PacBayesCommand;
pub use spectra::SpectraCommand;
pub use theorem::{GridCell, TheoremCommand};
pub use train::TrainCommand;

/// What a finished command reports on stdout.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub out: PathBuf,
    pub files: Vec<String>,
}

pub trait Command {
    fn name(&self) -> &'static str;
    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary>;
}

pub fn commands() -> Registry<dyn Command> {
    let mut reg: Registry<dyn Command> = Registry::new("command");
    reg.register("train", || Box::new(train::Train))
        .register("spectra", || Box::new(spectra::Spectra))
        .register("overlap", || Box::new(overlap::Overlap))
        .register("correspondence", || Box::new(correspondence::Correspondence))
        .register("verify-theorem", || Box::new(theorem::VerifyTheorem))
        .register("pacbayes", || Box::new(pacbayes::PacBayes));
    reg
}

pub(crate) fn apply_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        lhess::parallel::set_threads(n);
    }
}

pub(crate) fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a PathBuf> {
    value.as_ref().ok_or_else(|| CliError::Config(format!("`{key}` is required")))
}

pub(crate) fn load_model(path: &Path) -> CliResult<MlpModel> {
    Ok(checkpoint::load_model(path)?.0)
}

/// Requested layer indices, defaulting to every layer; out-of-range is a
/// configuration error.
pub(crate) fn resolve_layers(requested: &Option<Vec<usize>>, model: &MlpModel) -> CliResult<Vec<usize>> {
    let layers = requested.clone().unwrap_or_else(|| (0..model.num_layers()).collect());
    if layers.is_empty() {
        return Err(CliError::Config("`layers` must not be empty".into()));
    }
    if let Some(&bad) = layers.iter().find(|&&p| p >= model.num_layers()) {
        return Err(CliError::Config(format!(
            "layer {bad} out of range for a {}-layer model",
            model.num_layers()
        )));
    }
    Ok(layers)
}

pub(crate) fn check_data_fits(model: &MlpModel, dim: usize, classes: usize) -> CliResult<()> {
    if model.input_dim() != dim || model.num_classes() < classes {
        return Err(CliError::Config(format!(
            "model {:?} does not fit data with {dim} features and {classes} classes",
            model.layer_dims()
        )));
    }
    Ok(())
}
