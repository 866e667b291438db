use std::path::{Path, PathBuf};

use lhess::hessian::layer_factors;
use lhess::metrics::{self, correspondence_input, correspondence_output, CorrespondenceMatrix, EigenOptions};
use serde::{Deserialize, Serialize};

use super::{apply_threads, check_data_fits, load_model, require, resolve_layers, Command, Summary};
use crate::config::{self, resolve_common, DataConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrespondenceCommand {
    pub data: DataConfig,
    pub checkpoint: Option<PathBuf>,
    pub layers: Option<Vec<usize>>,
    /// Number of layer-Hessian eigenvectors (columns).
    pub k: usize,
    /// Number of factor eigenvectors (rows), capped by each factor's size.
    pub factor_k: usize,
    pub include_bias: bool,
    pub dense_max_dim: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for CorrespondenceCommand {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            checkpoint: None,
            layers: None,
            k: 10,
            factor_k: 10,
            include_bias: false,
            dense_max_dim: EigenOptions::default().dense_max_dim,
            seed: 0,
            out: None,
            threads: None,
        }
    }
}

fn long_rows(c: &CorrespondenceMatrix) -> Vec<Vec<Cell>> {
    let mut rows = Vec::with_capacity(c.data.rows() * c.data.cols());
    for i in 0..c.data.rows() {
        for j in 0..c.data.cols() {
            rows.push(vec![i.into(), j.into(), c.data[(i, j)].into()]);
        }
    }
    rows
}

pub(super) struct Correspondence;

impl Command for Correspondence {
    fn name(&self) -> &'static str {
        "correspondence"
    }

    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary> {
        let mut cfg: CorrespondenceCommand = config::load(config)?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        let (out_dir, threads) = resolve_common(&cfg.out, cfg.threads, flags)?;
        if cfg.k == 0 || cfg.factor_k == 0 {
            return Err(CliError::Config("`k` and `factor_k` must be positive".into()));
        }
        let model = load_model(require(&cfg.checkpoint, "checkpoint")?)?;
        let layers = resolve_layers(&cfg.layers, &model)?;
        apply_threads(threads);
        let data = cfg.data.load()?.train;
        check_data_fits(&model, data.dim(), data.num_classes)?;
        let opts = EigenOptions {
            include_bias: cfg.include_bias,
            seed: cfg.seed,
            dense_max_dim: cfg.dense_max_dim,
            lanczos_iters: None,
        };

        let mut out = OutputDir::create(&out_dir)?;
        let header = ["factor_index", "hessian_index", "weight"];
        for p in layers {
            let f = layer_factors(&model, &data, p, cfg.include_bias)?;
            let (m, n) = (f.out_dim(), f.in_dim());
            if cfg.k > m * n {
                return Err(CliError::Config(format!(
                    "k = {} exceeds the {} parameters of layer {p}",
                    cfg.k,
                    m * n
                )));
            }
            let eig = metrics::top_layer_eigenpairs(&model, &data, p, cfg.k, &opts)?;
            let h = &eig.pairs.vectors;
            let inp = correspondence_input(h, &f.in_eig.vectors.leading_cols(cfg.factor_k.min(n)), m, n)?;
            let outp = correspondence_output(h, &f.out_eig.vectors.leading_cols(cfg.factor_k.min(m)), m, n)?;
            out.csv(&format!("layer{p}_input.csv"), &header, &long_rows(&inp))?;
            out.csv(&format!("layer{p}_output.csv"), &header, &long_rows(&outp))?;
        }
        Ok(Summary {
            command: "correspondence",
            out: out_dir,
            files: out.files().to_vec(),
        })
    }
}
