//! Learning transformations between differential equations with Gaussian
//! processes.
//!
//! The crate is organized bottom-up: [`kernels`] supplies covariance
//! functions and their derivatives, [`regression`] solves minimum-norm
//! problems under linear-functional constraints, [`learning`] selects
//! lengthscales, [`dynamics`] holds forward solvers and closed-form
//! references, [`transforms`] builds the constraint systems for concrete
//! problems and [`cgc`] solves the jointly-coupled nonlinear problems.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cgc;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod learning;
pub mod optim;
pub mod regression;
pub mod transforms;

pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use regression::{fit, ConstraintSystem, Interpolant, LinearFunctional, Nugget};
