//! Regularized optimal affine discriminants for high-dimensional two-class
//! problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ccd;
pub mod error;
pub mod estimation;
pub mod numerics;
pub mod oracle_qp;
pub mod population;
pub mod road;
pub mod screening;
pub mod simulation;

pub use error::{Error, Result};
