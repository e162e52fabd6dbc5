//! Experiment runner for the regularized stochastic porous medium equation:
//! INI configuration, parallel drivers, CSV/binary output with manifests and
//! the `spme` command line.
//!
//! The numerics live in [`spme_core`]; this crate adds everything that needs
//! `std`. Exit codes are 0 on success, 1 on a scientific failure (a violated
//! inequality, a blow-up, a refinement study going the wrong way) and 2 on a
//! configuration or IO error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod parallel;

pub use cli::run;
pub use config::Config;
pub use error::CliError;
