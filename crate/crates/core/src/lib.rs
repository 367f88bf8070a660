#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod error;
pub mod flow;
pub mod games;
pub mod linalg;
pub mod lp_geometry;
pub mod math;
pub mod mdp;
pub mod measures;
pub mod npg;
pub mod simplex;

pub use error::{Error, Result};
