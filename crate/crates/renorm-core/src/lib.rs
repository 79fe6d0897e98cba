//! Period-doubling renormalization of three-dimensional Hénon-like maps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cantor;
pub mod error;
pub mod field;
pub mod geometry;
pub mod hmap3;
pub mod jet;
pub mod renorm;
pub mod tipframe;
pub mod tuning;
pub mod unimodal;
pub mod universal;

pub use error::{Error, Result};
