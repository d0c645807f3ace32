use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while loading a run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Errors from snapshot and time-series I/O.
#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a snapshot file (bad magic tag)")]
    BadMagic,
    #[error("unsupported snapshot version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("header/payload mismatch: expected {expected} bytes of field data, found {found}")]
    PayloadMismatch { expected: usize, found: usize },
    #[error("state dimensions {found:?} do not match grid {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("unexpected field tag {0:?}")]
    UnknownField(String),
    #[error("time-series row is missing column `{0}`")]
    MissingColumn(&'static str),
}

/// Errors raised while advancing the model.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("elliptic solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("incompatible Poisson right-hand side: mean {mean:e} exceeds tolerance for norm {norm:e}")]
    IncompatibleRhs { mean: f64, norm: f64 },
    #[error("tridiagonal solve failed in column {column}: zero pivot at level {level}")]
    Tridiagonal { column: usize, level: usize },
    #[error("non-finite value in `{field}` at cell {cell} (step {step})")]
    NonFinite {
        field: &'static str,
        cell: usize,
        step: u64,
    },
    #[error("negative diffusivity {0}")]
    NegativeDiffusivity(f64),
}

/// Top-level error for experiments and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("experiment `{name}` aborted: {reason}")]
    Aborted { name: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
