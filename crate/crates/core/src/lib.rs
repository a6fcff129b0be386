//! Greedy recovery of sparse and cosparse solutions to nonlinear inverse
//! problems `y = g(Ax)`.
//!
//! The synthesis-prior solvers ([`greedy::nl_omp`], [`greedy::nl_cosamp`])
//! select atoms from the gradient of the squared residual and refit the
//! active coordinates with Levenberg–Marquardt. The analysis-prior solver
//! ([`gap::nl_gap`]) starts from a dense estimate and prunes rows of an
//! analysis operator, re-solving a nonlinearly constrained least-squares
//! problem by a penalty method after every prune. With `g` the identity all
//! three reduce to their classical linear counterparts.
//!
//! Around the solvers sit a Monte-Carlo phase-transition harness
//! ([`bench`]) and a multiplicative-speckle denoising pipeline
//! ([`speckle`]) built on an orthonormal Daubechies wavelet and a
//! finite-difference total-variation operator ([`transforms`]).

// Validation is written as `!(v > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod gap;
pub mod greedy;
pub mod ista;
pub mod linalg;
pub mod model;
pub mod nlls;
pub mod speckle;
pub mod transforms;

pub use error::{Error, Result};
pub use linalg::LinearOperator;
pub use model::{MeasurementModel, Nonlinearity, ScalarMap};
