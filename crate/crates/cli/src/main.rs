//! `ulam-escape`: hole-size certificates, escape rates and the published
//! table runs from the command line.
//!
//! Every subcommand prints a plain-text summary (or JSON with `--json`) and
//! writes the JSON report, manifest included, to `--out` when given.
//! Exit status is 0 on success, 1 when a computation fails or a result is
//! outside tolerance, and 2 on usage errors.

mod commands;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ulam_escape::spectral::QNormConvention;
use ulam_escape::{Hole, Rational};

#[derive(Parser, Debug)]
#[command(name = "ulam-escape", version, about = "Computable hole sizes for open interval maps")]
pub struct Cli {
    /// Cache directory for matrices and spectral snapshots.
    #[arg(long, global = true, env = "ULAM_ESCAPE_CACHE", value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Print the JSON report instead of the summary table.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Assemble a closed or open Ulam matrix and write it to a file.
    UlamMatrix {
        /// Map config file, or the name of a bundled map.
        #[arg(long)]
        map: String,
        #[arg(long)]
        bins: usize,
        /// Hole `a,b` with rational endpoints on the bin grid.
        #[arg(long, value_parser = parse_hole)]
        hole: Option<Hole>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Eigenvalues, invariant density, power norms and resolvent bounds of a closed matrix file.
    Spectral {
        #[arg(long, value_name = "PATH")]
        matrix: PathBuf,
        #[arg(long, value_parser = parse_rational)]
        r: Rational,
        #[arg(long, value_parser = parse_rational)]
        delta: Rational,
        /// Neumann truncation index; extended automatically if the tail does not contract.
        #[arg(long = "N", default_value_t = ulam_escape::spectral::DEFAULT_TRUNCATION)]
        truncation: usize,
        /// Lasota-Yorke constants for `H*`; both or neither.
        #[arg(long, value_parser = parse_rational, requires = "b0")]
        alpha0: Option<Rational>,
        #[arg(long = "b0", alias = "B0", value_parser = parse_rational, requires = "alpha0")]
        b0: Option<Rational>,
        #[arg(long, default_value = "row-sums", value_parser = parse_convention)]
        norm: QNormConvention,
        #[command(flatten)]
        output: Output,
    },
    /// The Lasota-Yorke and perturbation constant chain for given inputs.
    KlConstants {
        #[arg(long, value_parser = parse_rational)]
        alpha0: Rational,
        #[arg(long = "B0", alias = "b0", value_parser = parse_rational)]
        b0: Rational,
        #[arg(long, value_parser = parse_rational)]
        r: Rational,
        #[arg(long, value_parser = parse_rational)]
        delta: Rational,
        /// Resolvent bound of the unperturbed operator.
        #[arg(long = "H")]
        h: f64,
        /// Use the hole-free constants (`α = α₀`, `B̂`, `D̂`).
        #[arg(long)]
        closed_only: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Run the certification algorithm.
    Certify {
        #[arg(long)]
        map: String,
        #[arg(long, value_parser = parse_rational)]
        ell: Rational,
        /// Initial `δ`, of the form `1/k`.
        #[arg(long, value_parser = parse_rational)]
        delta_init: Option<Rational>,
        #[arg(long, default_value_t = 1000)]
        bins_init: usize,
        #[arg(long, default_value_t = 12)]
        max_inner: usize,
        #[arg(long, default_value_t = 8)]
        max_outer: usize,
        #[arg(long, default_value_t = 200_000)]
        max_bins: usize,
        /// Largest bin count handled by the dense eigensolver.
        #[arg(long, default_value_t = ulam_escape::spectral::DENSE_LIMIT)]
        dense_limit: usize,
        #[arg(long, default_value = "row-sums", value_parser = parse_convention)]
        norm: QNormConvention,
        /// Always refine by eigen-analysis instead of transferring bounds.
        #[arg(long)]
        no_bootstrap: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Escape rate of one hole by power iteration on the open matrix.
    Escape {
        #[arg(long)]
        map: String,
        #[arg(long)]
        bins: usize,
        #[arg(long, value_parser = parse_hole)]
        hole: Hole,
        #[command(flatten)]
        output: Output,
    },
    /// `(1 - e_H)/λ(H)` for holes shrinking to a point.
    HoleAsymptotics {
        #[arg(long)]
        map: String,
        #[arg(long, value_parser = parse_rational)]
        point: Rational,
        /// Comma-separated, strictly decreasing.
        #[arg(long, value_delimiter = ',', value_parser = parse_rational, required = true)]
        widths: Vec<Rational>,
        #[arg(long)]
        bins_per_hole: usize,
        #[arg(long, default_value_t = 32)]
        max_period: usize,
        #[arg(long, default_value = "auto", value_parser = ["auto", "analytic", "ulam"])]
        density: String,
        #[command(flatten)]
        output: Output,
    },
    /// Rerun both published certification tables and diff them cell by cell.
    ReproduceTables {
        /// Map config file or bundled map name.
        #[arg(long, default_value = "moebius-ten-branch")]
        map: String,
        /// Directory for `table1.json` and `table2.json`.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Inspect or clear the cache directory.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum CacheAction {
    List,
    Purge,
    /// Header or summary of one entry.
    Inspect { name: String },
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    s.parse().map_err(|e: ulam_escape::Error| e.to_string())
}

fn parse_hole(s: &str) -> Result<Hole, String> {
    Hole::parse(s).map_err(|e| e.to_string())
}

fn parse_convention(s: &str) -> Result<QNormConvention, String> {
    s.parse().map_err(|e: ulam_escape::Error| e.to_string())
}

/// Failure of a run: an error, or a completed run whose result is rejected.
pub enum Failure {
    Error(anyhow::Error),
    Rejected(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Rejected(why)) => {
            eprintln!("failed: {why}");
            ExitCode::from(1)
        }
    }
}
