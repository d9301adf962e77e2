// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod exponents;
pub mod linalg;
pub mod optim;
pub mod potentials;
pub mod qtensor;
pub mod regularize;
pub mod retract;
pub mod sampling;
pub mod solver;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use potentials::{Potential, PotentialSpec};
pub use qtensor::{QTensor, Region, Spectrum};
