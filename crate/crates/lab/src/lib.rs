//! Configuration, file formats and the command-line front end of the gyrokinetic
//! SHE laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, Cli};
pub use error::LabError;
