use std::path::{Path, PathBuf};

use lhess::network::{checkpoint, dataset_loss, error_rate, initializer, train_sgd, TrainConfig};
use serde::{Deserialize, Serialize};

use super::{apply_threads, Command, Summary};
use crate::config::{self, resolve_common, DataConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommand {
    pub data: DataConfig,
    /// Hidden widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
    pub init: String,
    /// `train.seed` is replaced by each entry of `seeds`.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for TrainCommand {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            hidden: vec![20, 20],
            init: "xavier".into(),
            train: TrainConfig::default(),
            seeds: vec![0],
            out: None,
            threads: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunRecord {
    seed: u64,
    checkpoint: String,
    init_checkpoint: String,
    loss_curve: String,
    snapshots: Vec<String>,
    final_loss: Option<f64>,
    train_loss: f64,
    train_error: f64,
    test_error: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    layer_dims: Vec<usize>,
    init: &'a str,
    n_train: usize,
    n_test: usize,
    train: &'a TrainConfig,
    runs: Vec<RunRecord>,
}

pub(super) struct Train;

impl Command for Train {
    fn name(&self) -> &'static str {
        "train"
    }

    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary> {
        let mut cfg: TrainCommand = config::load(config)?;
        if let Some(seed) = flags.seed {
            cfg.seeds = vec![seed];
        }
        let (out_dir, threads) = resolve_common(&cfg.out, cfg.threads, flags)?;
        if cfg.seeds.is_empty() {
            return Err(CliError::Config("`seeds` must not be empty".into()));
        }
        if cfg.hidden.contains(&0) {
            return Err(CliError::Config("hidden widths must be positive".into()));
        }
        if cfg.train.batch_size == 0 || !(cfg.train.lr >= 0.0) {
            return Err(CliError::Config(
                "train.batch_size must be positive and train.lr non-negative".into(),
            ));
        }
        let init = initializer(&cfg.init).map_err(|e| CliError::Config(e.to_string()))?;
        apply_threads(threads);

        let splits = cfg.data.load()?;
        let mut dims = vec![splits.train.dim()];
        dims.extend(&cfg.hidden);
        dims.push(splits.train.num_classes);

        let mut out = OutputDir::create(&out_dir)?;
        let mut runs = Vec::new();
        for &seed in &cfg.seeds {
            let theta0 = init.init(&dims, seed)?;
            let tc = TrainConfig { seed, ..cfg.train.clone() };
            let outcome = train_sgd(&theta0, &splits.train, &tc)?;

            let init_name = format!("init_s{seed}.ckpt");
            checkpoint::save_model(out.path(&init_name), &theta0, seed, 0)?;
            out.record(&init_name);
            let mut snapshots = Vec::new();
            for (epoch, model) in &outcome.snapshots {
                let name = format!("model_s{seed}_e{epoch}.ckpt");
                checkpoint::save_model(out.path(&name), model, seed, *epoch)?;
                out.record(&name);
                snapshots.push(name);
            }
            let name = format!("model_s{seed}.ckpt");
            checkpoint::save_model(out.path(&name), &outcome.model, seed, tc.epochs)?;
            out.record(&name);

            let curve = format!("loss_s{seed}.csv");
            let rows: Vec<Vec<Cell>> = outcome
                .epoch_losses
                .iter()
                .enumerate()
                .map(|(e, &l)| vec![(e + 1).into(), l.into()])
                .collect();
            out.csv(&curve, &["epoch", "loss"], &rows)?;

            let test_error = if splits.test.is_empty() {
                None
            } else {
                Some(error_rate(&outcome.model, &splits.test.inputs, &splits.test.labels)?)
            };
            runs.push(RunRecord {
                seed,
                checkpoint: name,
                init_checkpoint: init_name,
                loss_curve: curve,
                snapshots,
                final_loss: outcome.epoch_losses.last().copied(),
                train_loss: dataset_loss(&outcome.model, &splits.train.inputs, &splits.train.labels)?,
                train_error: error_rate(&outcome.model, &splits.train.inputs, &splits.train.labels)?,
                test_error,
            });
        }
        let manifest = Manifest {
            layer_dims: dims,
            init: &cfg.init,
            n_train: splits.train.len(),
            n_test: splits.test.len(),
            train: &cfg.train,
            runs,
        };
        out.json("manifest.json", &manifest)?;
        Ok(Summary {
            command: "train",
            out: out_dir,
            files: out.files().to_vec(),
        })
    }
}
