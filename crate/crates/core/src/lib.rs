//! Moist primitive equations in pressure coordinates on a rectangular
//! column domain: a finite-volume solver with warm-rain microphysics and
//! the numerical diagnostics used to study its invariants.

pub mod boundary;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod microphysics;
pub mod operators;
pub mod state;
pub mod timestepper;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{ConfigError, Error, IoError, Result, SolverError};
pub use grid::Grid;
pub use microphysics::Params;
pub use state::State;
