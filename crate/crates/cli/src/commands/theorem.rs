use std::path::{Path, PathBuf};

use lhess::theory::run_theorem_grid;
use serde::{Deserialize, Serialize};

use super::{apply_threads, Command, Summary};
use crate::config::{self, resolve_common, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, OutputDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    /// Hidden width.
    pub n: usize,
    /// Input dimension.
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremCommand {
    pub grid: Vec<GridCell>,
    pub c: usize,
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for TheoremCommand {
    fn default() -> Self {
        Self {
            grid: vec![GridCell { n: 512, d: 2048 }],
            c: 10,
            n_samples: 10_000,
            seeds: vec![0],
            out: None,
            threads: None,
        }
    }
}

pub(super) struct VerifyTheorem;

impl Command for VerifyTheorem {
    fn name(&self) -> &'static str {
        "verify-theorem"
    }

    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary> {
        let mut cfg: TheoremCommand = config::load(config)?;
        if let Some(seed) = flags.seed {
            cfg.seeds = vec![seed];
        }
        let (out_dir, threads) = resolve_common(&cfg.out, cfg.threads, flags)?;
        if cfg.grid.is_empty() || cfg.seeds.is_empty() {
            return Err(CliError::Config("`grid` and `seeds` must not be empty".into()));
        }
        if cfg.c < 2 || cfg.n_samples == 0 || cfg.grid.iter().any(|g| g.n == 0 || g.d == 0) {
            return Err(CliError::Config("need c ≥ 2, n_samples ≥ 1 and positive grid sizes".into()));
        }
        apply_threads(threads);
        let cells: Vec<(usize, usize)> = cfg.grid.iter().map(|g| (g.n, g.d)).collect();
        let reports = run_theorem_grid(&cells, cfg.c, cfg.n_samples, &cfg.seeds)?;

        let mut out = OutputDir::create(&out_dir)?;
        out.json("theorem.json", &reports)?;
        let rows: Vec<Vec<Cell>> = reports
            .iter()
            .map(|r| {
                vec![
                    r.n.into(),
                    r.d.into(),
                    r.c.into(),
                    r.n_samples.into(),
                    r.seed.into(),
                    r.eig_ratio.into(),
                    r.overlap.into(),
                    r.decoupled_distance.into(),
                    r.null_residual.into(),
                ]
            })
            .collect();
        out.csv(
            "theorem.csv",
            &[
                "n",
                "d",
                "c",
                "n_samples",
                "seed",
                "eig_ratio",
                "overlap",
                "decoupled_distance",
                "null_residual",
            ],
            &rows,
        )?;
        Ok(Summary {
            command: "verify-theorem",
            out: out_dir,
            files: out.files().to_vec(),
        })
    }
}
