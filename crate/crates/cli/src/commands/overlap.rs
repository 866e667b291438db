use std::path::{Path, PathBuf};

use lhess::metrics::{cross_model_overlap, OverlapOptions};
use serde::{Deserialize, Serialize};

use super::{apply_threads, check_data_fits, load_model, resolve_layers, Command, Summary};
use crate::config::{self, resolve_common, DataConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, OutputDir};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapCommand {
    pub data: DataConfig,
    pub checkpoints: Vec<PathBuf>,
    pub layers: Option<Vec<usize>>,
    /// Largest subspace dimension; defaults to three times the layer's output width.
    pub k_max: Option<usize>,
    pub include_bias: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

pub(super) struct Overlap;

impl Command for Overlap {
    fn name(&self) -> &'static str {
        "overlap"
    }

    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary> {
        let mut cfg: OverlapCommand = config::load(config)?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        let (out_dir, threads) = resolve_common(&cfg.out, cfg.threads, flags)?;
        if cfg.checkpoints.len() < 2 {
            return Err(CliError::Config("`checkpoints` needs at least two models".into()));
        }
        if cfg.k_max == Some(0) {
            return Err(CliError::Config("`k_max` must be positive".into()));
        }
        let models = cfg.checkpoints.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
        if let Some(m) = models.iter().find(|m| m.layer_dims() != models[0].layer_dims()) {
            return Err(CliError::Config(format!(
                "architecture mismatch: {:?} vs {:?}",
                models[0].layer_dims(),
                m.layer_dims()
            )));
        }
        let layers = resolve_layers(&cfg.layers, &models[0])?;
        apply_threads(threads);
        let data = cfg.data.load()?.train;
        check_data_fits(&models[0], data.dim(), data.num_classes)?;

        let opts = OverlapOptions {
            include_bias: cfg.include_bias,
            seed: cfg.seed,
        };
        let mut out = OutputDir::create(&out_dir)?;
        for p in layers {
            let (m, n) = models[0].layer_shape(p);
            let n = n + usize::from(cfg.include_bias);
            let k_max = cfg.k_max.unwrap_or(3 * m).min(m * n);
            let curve = cross_model_overlap(&models, &data, p, k_max, &opts)?;
            let rows: Vec<Vec<Cell>> = (0..curve.dims.len())
                .map(|i| {
                    vec![
                        curve.dims[i].into(),
                        curve.overlaps[i].into(),
                        curve.std[i].into(),
                        curve.baseline[i].into(),
                    ]
                })
                .collect();
            out.csv(
                &format!("layer{p}_overlap.csv"),
                &["k", "mean_overlap", "std", "random_baseline"],
                &rows,
            )?;
        }
        Ok(Summary {
            command: "overlap",
            out: out_dir,
            files: out.files().to_vec(),
        })
    }
}
