#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod gate_finder;
pub mod gdln;
pub mod linalg;
pub mod relu;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
