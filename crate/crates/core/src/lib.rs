#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]
extern crate alloc;

pub mod correlation;
pub mod dcoeff;
pub mod error;
pub mod field;
pub mod harness;
pub mod kinetics;
pub mod math;
pub mod quadrature;
pub mod rng;
pub mod she;

pub use error::{Error, Result};
