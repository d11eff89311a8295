//! Calderón–Zygmund machinery for measures with polynomial growth, on atomic
//! approximations.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covering;
pub mod cube;
pub mod czo;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod lattice;
pub mod maximal;
pub mod measure;
pub mod weights;

pub use cube::Cube;
pub use error::{Error, Result};
pub use measure::{DiscreteMeasure, GridFunction};
