//! Command-line front end: each subcommand reads a JSON configuration,
//! applies flag overrides, runs one analysis and writes CSV / JSON files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lhess", version, about = "Layer-wise Hessian analysis of ReLU classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args, Clone)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Train networks and write checkpoints plus a manifest.
    Train(CommonArgs),
    /// Layer-wise eigenvalues, Kronecker approximations and rank-1 diagnostics.
    Spectra(CommonArgs),
    /// Cross-model eigenspace overlap curves.
    Overlap(CommonArgs),
    /// Correspondence matrices between Hessian and factor eigenvectors.
    Correspondence(CommonArgs),
    /// Check the output-Hessian structure of random two-layer networks.
    VerifyTheorem(CommonArgs),
    /// Optimize and certify a PAC-Bayes bound.
    Pacbayes(CommonArgs),
}

impl Sub {
    fn split(self) -> (&'static str, CommonArgs) {
        match self {
            Sub::Train(a) => ("train", a),
            Sub::Spectra(a) => ("spectra", a),
            Sub::Overlap(a) => ("overlap", a),
            Sub::Correspondence(a) => ("correspondence", a),
            Sub::VerifyTheorem(a) => ("verify-theorem", a),
            Sub::Pacbayes(a) => ("pacbayes", a),
        }
    }
}

/// Outcome of a parsed invocation: help text, or a command result.
pub enum Invocation {
    Display(String),
    Ran(commands::Summary),
}

pub fn run<I, T>(args: I) -> CliResult<Invocation>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            return Ok(Invocation::Display(e.to_string()));
        }
        Err(e) => {
            return Err(CliError::Usage(
                e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""),
            ))
        }
    };
    let (name, a) = cli.command.split();
    let flags = config::Overrides {
        out: a.out,
        seed: a.seed,
        threads: a.threads,
    };
    let command = commands::commands().create(name)?;
    command.run(a.config.as_deref(), &flags).map(Invocation::Ran)
}
