#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod control;
pub mod delay;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod lpv;
pub mod math;
pub mod params;
pub mod plant;
pub mod qp;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
