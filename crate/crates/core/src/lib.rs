//! Least-squares splitting solvers for two-dimensional fully nonlinear
//! elliptic equations, with Deep Ritz networks for the linear substep.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod constraints;
pub mod error;
pub mod geometry;
pub mod network;
pub mod optim;
pub mod ritz;
pub mod splitting;
pub mod tensor_ad;

pub use error::{Error, Result};
