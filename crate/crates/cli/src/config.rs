//! Command configurations: JSON files with every key optional, unknown keys
//! rejected, and command-line flags applied on top.

use std::fs;
use std::path::{Path, PathBuf};

use lhess::datasets::{self, Dataset};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand; they override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Output directory and thread count after applying flags over the config.
pub fn resolve_common(out: &Option<PathBuf>, threads: Option<usize>, flags: &Overrides) -> CliResult<(PathBuf, Option<usize>)> {
    let out = flags.out.clone().or_else(|| out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let threads = flags.threads.or(threads);
    if threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    Ok((out, threads))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Idx,
    Gaussian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relabel {
    #[default]
    None,
    Mnist2,
    Random,
}

/// Where samples come from and how they are split into train / test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub relabel: Relabel,
    pub relabel_seed: u64,
    /// Training rows after a seeded shuffle; all rows when absent.
    pub n_train: Option<usize>,
    /// Test rows taken from the remainder; the whole remainder when absent.
    pub n_test: Option<usize>,
    pub split_seed: u64,
    /// Gaussian source only.
    pub samples: usize,
    pub dim: usize,
    pub classes: usize,
    pub data_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Idx,
            images: None,
            labels: None,
            relabel: Relabel::None,
            relabel_seed: 0,
            n_train: None,
            n_test: None,
            split_seed: 0,
            samples: 1000,
            dim: 20,
            classes: 5,
            data_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataConfig {
    pub fn validate(&self) -> CliResult<()> {
        match self.source {
            DataSource::Idx if self.images.is_none() || self.labels.is_none() => {
                Err(CliError::Config("data.images and data.labels are required for idx data".into()))
            }
            DataSource::Gaussian if self.samples == 0 || self.dim == 0 || self.classes < 2 => {
                Err(CliError::Config("gaussian data needs samples ≥ 1, dim ≥ 1, classes ≥ 2".into()))
            }
            _ if self.n_train == Some(0) => Err(CliError::Config("data.n_train must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn load(&self) -> CliResult<Splits> {
        self.validate()?;
        let full = match self.source {
            DataSource::Idx => datasets::load_idx(self.images.as_ref().unwrap(), self.labels.as_ref().unwrap())?,
            DataSource::Gaussian => datasets::gaussian_synthetic(self.samples, self.dim, self.classes, self.data_seed)?,
        };
        let full = match self.relabel {
            Relabel::None => full,
            Relabel::Mnist2 => datasets::relabel_mnist2(&full)?,
            Relabel::Random => datasets::randomize_labels(&full, self.relabel_seed),
        };
        let n_train = self.n_train.unwrap_or(full.len());
        if n_train > full.len() {
            return Err(CliError::Config(format!("data.n_train = {n_train} exceeds {} samples", full.len())));
        }
        let (train, rest) = datasets::split(&full, n_train, self.split_seed)?;
        let test = match self.n_test {
            Some(n) if n > rest.len() => {
                return Err(CliError::Config(format!(
                    "data.n_test = {n} exceeds the {} held-out samples",
                    rest.len()
                )));
            }
            Some(n) => rest.select(&(0..n).collect::<Vec<_>>()),
            None => rest,
        };
        Ok(Splits { train, test })
    }
}
