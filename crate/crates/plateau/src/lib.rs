//! Configuration, file formats and the command line for `plateau-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod io;
pub mod suite;

pub use config::RunConfig;
