use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("no branch contains x = {0}")]
    DomainGap(f64),

    #[error("branch index {index} out of range ({count} branches)")]
    BranchIndex { index: usize, count: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid hole: {0}")]
    InvalidHole(String),

    #[error("hole endpoint {endpoint} is not a point of the {n_bins}-bin partition")]
    HoleAlignment { endpoint: String, n_bins: usize },

    #[error("row {row} of the Ulam matrix sums to {sum:.17} (tolerance 1e-9)")]
    NumericConsistency { row: usize, sum: f64 },

    #[error("matrix is not closed (row-stochastic); spectral analysis needs the closed matrix")]
    NotClosed,

    #[error("no eigenvalue within 1e-8 of 1 (closest: {closest})")]
    NoUnitEigenvalue { closest: Complex64 },

    #[error("eigenpair residual {residual:.3e} exceeds 1e-8 for eigenvalue {eigenvalue}")]
    Residual { eigenvalue: Complex64, residual: f64 },

    #[error("invariant density did not converge: {0}")]
    DensityConvergence(String),

    #[error("iterative eigensolver did not converge: {0}")]
    EigenConvergence(String),

    #[error("Neumann tail ratio {ratio} >= 1 at truncation {truncation} (r too close to the essential spectrum)")]
    NeumannDivergence { ratio: f64, truncation: usize },

    #[error("spectral structure: {0}")]
    SpectralStructure(String),

    #[error("parameter out of range: {0}")]
    Domain(String),

    #[error("Lasota-Yorke mode: {0}")]
    LyMode(String),

    #[error("bootstrap precondition failed: 2*Gamma*mesh = {lhs:.10e} > closed-only eps0* = {rhs:.10e}")]
    BootstrapPrecondition { lhs: f64, rhs: f64 },

    #[error("escape power iteration did not converge after {iterations} iterations (ratio spread {spread:.3e})")]
    EscapeConvergence { iterations: usize, spread: f64 },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cache entry {path:?} is corrupt: {reason}")]
    CorruptCache { path: PathBuf, reason: String },

    #[error("dense linear algebra: {0}")]
    Dense(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
