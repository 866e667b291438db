use std::path::{Path, PathBuf};

use lhess::linalg::Matrix;
use lhess::network::checkpoint;
use lhess::pacbayes::{
    basis_strategies, final_bound, optimize, step_rules, BoundConfig, BoundParams, BoundReport, PacBayesConfig, PacBayesState,
};
use serde::{Deserialize, Serialize};

use super::{apply_threads, check_data_fits, load_model, Command, Summary};
use crate::config::{self, resolve_common, DataConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacBayesCommand {
    pub data: DataConfig,
    /// Trained network used as the initial posterior mean.
    pub checkpoint: Option<PathBuf>,
    /// The random initialization of that network: the prior mean.
    pub init_checkpoint: Option<PathBuf>,
    pub variant: String,
    pub step_rule: String,
    pub tau: f64,
    pub iterations: usize,
    pub eta: usize,
    pub batch_size: usize,
    pub decay_every: Option<usize>,
    pub decay_factor: f64,
    pub trace_every: usize,
    pub delta: f64,
    pub b_prec: f64,
    pub c_lambda: f64,
    pub mc_iters: usize,
    pub mc_freq: usize,
    pub delta_prime: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for PacBayesCommand {
    fn default() -> Self {
        let o = PacBayesConfig::default();
        let b = BoundConfig::default();
        Self {
            data: DataConfig::default(),
            checkpoint: None,
            init_checkpoint: None,
            variant: o.variant,
            step_rule: o.step_rule,
            tau: o.tau,
            iterations: o.iterations,
            eta: o.eta,
            batch_size: o.batch_size,
            decay_every: o.decay_every,
            decay_factor: o.decay_factor,
            trace_every: o.trace_every,
            delta: o.bound.delta,
            b_prec: o.bound.b_prec,
            c_lambda: o.bound.c_lambda,
            mc_iters: b.mc_iters,
            mc_freq: b.mc_freq,
            delta_prime: b.delta_prime,
            seed: 0,
            out: None,
            threads: None,
        }
    }
}

impl PacBayesCommand {
    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !basis_strategies().contains(&self.variant) {
            return bad(format!(
                "unknown variant `{}` (available: {})",
                self.variant,
                basis_strategies().names().join(", ")
            ));
        }
        if !step_rules().contains(&self.step_rule) {
            return bad(format!(
                "unknown step_rule `{}` (available: {})",
                self.step_rule,
                step_rules().names().join(", ")
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        if self.iterations == 0 || self.eta == 0 || self.batch_size == 0 || self.trace_every == 0 {
            return bad("iterations, eta, batch_size and trace_every must be positive".into());
        }
        if self.mc_iters == 0 || self.mc_freq == 0 {
            return bad("mc_iters and mc_freq must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) || !(self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return bad("delta and delta_prime must lie in (0, 1)".into());
        }
        if !(self.b_prec > 0.0) || !(self.c_lambda > 0.0) {
            return bad("b_prec and c_lambda must be positive".into());
        }
        Ok(())
    }

    fn params(&self) -> BoundParams {
        BoundParams {
            delta: self.delta,
            b_prec: self.b_prec,
            c_lambda: self.c_lambda,
        }
    }
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    variant: &'a str,
    step_rule: &'a str,
    seed: u64,
    iterations: usize,
    basis_updates: usize,
    #[serde(flatten)]
    bound: &'a BoundReport,
}

pub(super) struct PacBayes;

impl Command for PacBayes {
    fn name(&self) -> &'static str {
        "pacbayes"
    }

    fn run(&self, config: Option<&Path>, flags: &Overrides) -> CliResult<Summary> {
        let mut cfg: PacBayesCommand = config::load(config)?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        let (out_dir, threads) = resolve_common(&cfg.out, cfg.threads, flags)?;
        cfg.validate()?;
        let mean_path = cfg
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("`checkpoint` (the trained network) is required".into()))?;
        let prior_path = cfg.init_checkpoint.as_ref().ok_or_else(|| {
            CliError::Config("`init_checkpoint` is required: the prior mean must be the network's random initialization".into())
        })?;
        let w = load_model(mean_path)?;
        let theta0 = load_model(prior_path)?;
        if w.layer_dims() != theta0.layer_dims() {
            return Err(CliError::Config(format!(
                "checkpoint {:?} and init_checkpoint {:?} differ in architecture",
                w.layer_dims(),
                theta0.layer_dims()
            )));
        }
        apply_threads(threads);
        let splits = cfg.data.load()?;
        if splits.test.is_empty() {
            return Err(CliError::Config(
                "pacbayes needs held-out samples (set data.n_train below the dataset size)".into(),
            ));
        }
        check_data_fits(&w, splits.train.dim(), splits.train.num_classes)?;

        let opt = PacBayesConfig {
            variant: cfg.variant.clone(),
            step_rule: cfg.step_rule.clone(),
            tau: cfg.tau,
            iterations: cfg.iterations,
            eta: cfg.eta,
            batch_size: cfg.batch_size,
            decay_every: cfg.decay_every,
            decay_factor: cfg.decay_factor,
            trace_every: cfg.trace_every,
            seed: cfg.seed,
            bound: cfg.params(),
        };
        let state = PacBayesState::new(&w, &theta0)?;
        let outcome = optimize(&state, &splits.train, &opt)?;
        let bc = BoundConfig {
            mc_iters: cfg.mc_iters,
            mc_freq: cfg.mc_freq,
            delta_prime: cfg.delta_prime,
            seed: cfg.seed,
            bound: cfg.params(),
        };
        let report = final_bound(&outcome.state, &splits.train, &splits.test, &bc)?;

        let mut out = OutputDir::create(&out_dir)?;
        out.json(
            "bound.json",
            &Report {
                variant: &cfg.variant,
                step_rule: &cfg.step_rule,
                seed: cfg.seed,
                iterations: cfg.iterations,
                basis_updates: outcome.basis_updates,
                bound: &report,
            },
        )?;
        let rows: Vec<Vec<Cell>> = outcome
            .trace
            .iter()
            .map(|t| {
                vec![
                    t.iteration.into(),
                    t.loss.into(),
                    t.r.into(),
                    t.objective.into(),
                    t.kl.into(),
                    t.varrho.into(),
                ]
            })
            .collect();
        out.csv("trace.csv", &["iteration", "loss", "r", "objective", "kl", "varrho"], &rows)?;
        let rows: Vec<Vec<Cell>> = report.mc_trace.iter().map(|p| vec![p.samples.into(), p.snn_error.into()]).collect();
        out.csv("mc_trace.csv", &["samples", "snn_error"], &rows)?;

        checkpoint::save_model(
            out.path("posterior_mean.ckpt"),
            &outcome.state.mean_model()?,
            cfg.seed,
            cfg.iterations,
        )?;
        out.record("posterior_mean.ckpt");
        let s = &outcome.state.varsigma;
        checkpoint::save_matrix(out.path("posterior_varsigma.bin"), &Matrix::from_vec(1, s.len(), s.clone())?)?;
        out.record("posterior_varsigma.bin");
        Ok(Summary {
            command: "pacbayes",
            out: out_dir,
            files: out.files().to_vec(),
        })
    }
}
