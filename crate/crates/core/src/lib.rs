//! Poisson non-negative matrix factorization with the shifted-log link.
//!
//! The model treats each count `y_ij` as Poisson with mean `λ_ij`, where
//!
//! ```text
//! α_c · log(1 + λ_ij / c) = (L Fᵀ)_ij,      α_c = max(1, c)
//! ```
//!
//! and `L`, `F` are non-negative. Large `c` recovers the classical additive
//! (identity link) Poisson NMF; small `c` makes factors combine roughly
//! multiplicatively.
//!
//! The crate is organised by subsystem:
//!
//! * [`countmat`]: sparse count matrices with MatrixMarket I/O.
//! * [`link`]: the shifted-log link family.
//! * [`quadapprox`]: quadratic approximations of `exp` used by the sparse objective.
//! * [`likelihood`]: exact, approximate and identity-link log-likelihoods.
//! * [`regression`]: non-negative Poisson regression by cyclic coordinate ascent.
//! * [`fitter`]: alternating block coordinate ascent over `L` and `F`.
//! * [`eval`]: metrics, the simulator and baseline fitters.
//! * [`geometry`]: the upper-right hull construction for the small-`c` limit.
//! * [`io`]: CSV readers and writers for factor matrices.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod countmat;
pub mod error;
pub mod eval;
pub mod fitter;
pub mod geometry;
pub mod io;
pub mod likelihood;
pub mod link;
pub mod quadapprox;
pub mod regression;

pub use countmat::{CountMatrix, SparseSlice};
pub use error::{Error, Result};
pub use fitter::{fit, CParam, FitConfig, FitReport, Objective};
pub use likelihood::FactorModel;
pub use link::{Link, LinkParam};
pub use quadapprox::{ApproxMethod, QuadApprox};
pub use regression::{Gram, RegressionProblem, Shift, SolverOptions};
