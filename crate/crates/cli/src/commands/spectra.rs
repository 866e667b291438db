use std::path::{Path, PathBuf};

use lhess::hessian::{kron_approx_spectrum, layer_factors};
use lhess::metrics::{self, autocorr_stats, subspace_overlap, top_singular_ratio, EigMethod, EigenOptions, DEFLATION_MARGIN};
use serde::{Deserialize, Serialize};

use super::{apply_threads, check_data_fits, load_model, require, resolve_layers, Command, Summary};
use crate::config::{self, resolve_common, DataConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraCommand {
    pub data: DataConfig,
    pub checkpoint: Option<PathBuf>,
    pub layers: Option<Vec<usize>>,
    pub k: usize,
    pub include_bias: bool,
    /// Layers with at most this many parameters use the dense Hessian.
    pub dense_max_dim: usize,
    pub lanczos_iters: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for SpectraCommand {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            checkpoint: None,
            layers: None,
            k: 10,
            include_bias: false,
            dense_max_dim: EigenOptions::default().dense_max_dim,
            lanczos_iters: None,
            seed: 0,
            out: None,
            threads: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct LayerRecord {
    layer: usize,
    shape: (usize, usize),
    method: EigMethod,
    converged: usize,
}

pub(super) struct Spectra;

impl Command for Spectra {
    fn name(&self) -> &'static str {
        "spectra"
    }

    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary> {
        let mut cfg: SpectraCommand = config::load(config)?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        let (out_dir, threads) = resolve_common(&cfg.out, cfg.threads, flags)?;
        if cfg.k == 0 {
            return Err(CliError::Config("`k` must be positive".into()));
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
            lanczos_iters: cfg.lanczos_iters,
        };
        let mut out = OutputDir::create(&out_dir)?;
        let mut autocorr = Vec::new();
        let mut records = Vec::new();
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
            let wanted = (cfg.k + DEFLATION_MARGIN).min(m * n);
            let eig = metrics::top_layer_eigenpairs(&model, &data, p, wanted, &opts)?;
            let kron = kron_approx_spectrum(&f, cfg.k)?;
            let top = eig.pairs.top(cfg.k);

            let rows: Vec<Vec<Cell>> = (0..cfg.k)
                .map(|i| vec![i.into(), top.values[i].into(), kron.values[i].into(), eig.residuals[i].into()])
                .collect();
            out.csv(
                &format!("layer{p}_eigenvalues.csv"),
                &["index", "true_eigenvalue", "approx_eigenvalue", "residual"],
                &rows,
            )?;

            let rows = (1..=cfg.k)
                .map(|kk| {
                    let o = subspace_overlap(&top.vectors.leading_cols(kk), &kron.vectors.leading_cols(kk))?;
                    Ok(vec![kk.into(), o.into()])
                })
                .collect::<CliResult<Vec<_>>>()?;
            out.csv(&format!("layer{p}_overlap.csv"), &["k", "overlap"], &rows)?;

            let rows = (0..cfg.k)
                .map(|i| {
                    Ok(vec![
                        i.into(),
                        top.values[i].into(),
                        top_singular_ratio(&top.vector(i), m, n)?.into(),
                    ])
                })
                .collect::<CliResult<Vec<_>>>()?;
            out.csv(
                &format!("layer{p}_singular.csv"),
                &["index", "eigenvalue", "top_singular_ratio"],
                &rows,
            )?;

            let s = autocorr_stats(&f, &f.input_mean)?;
            autocorr.push(vec![p.into(), s.sq_dot.into(), s.spec_ratio.into(), s.mean_vs_cov.into()]);
            records.push(LayerRecord {
                layer: p,
                shape: (m, n),
                method: eig.method,
                converged: eig.converged(),
            });
        }
        out.csv("autocorr.csv", &["layer", "sq_dot", "spec_ratio", "mean_vs_cov"], &autocorr)?;
        out.json("spectra.json", &records)?;
        Ok(Summary {
            command: "spectra",
            out: out_dir,
            files: out.files().to_vec(),
        })
    }
}
