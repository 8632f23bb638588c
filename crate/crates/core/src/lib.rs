//! Numerical laboratory for rigidity of gradients taking values near
//! elliptic closed curves of 2x2 matrices.

// NaN-rejecting `!(x > 0.0)` guards and index loops over 3x3 entries are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod curve;
pub mod error;
pub mod field;
pub mod io;
pub mod matrix;
pub mod optim;
pub mod pde;
pub mod rigidity;
pub mod t4;

pub use error::{Error, Result};
