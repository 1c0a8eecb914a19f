//! Simulation of the heat-modulated infinite-dimensional Heston (HEIDIH)
//! forward-price model.
//!
//! The volatility `Y` solves a stochastic heat equation on the half-line,
//! localized to `(0, D)` with Dirichlet conditions and discretized with
//! piecewise-linear finite elements and backward Euler. The price `X` is
//! transported along characteristics on an equal-step space-time lattice.
//! Noise is sampled pointwise on the finite element nodes through circulant
//! embedding of weighted Matérn covariances.
//!
//! Module map:
//!
//! * [`kernels`]: Matérn, weight-stationary and Sobolev kernels, `K_ν`.
//! * [`noise`]: grids, circulant embedding, Cholesky oracle, coupling.
//! * [`heat_fem`]: finite element / backward Euler volatility solver.
//! * [`heat_reference`]: spectral and reflection semigroup evaluators.
//! * [`price_fd`]: the fully discrete price scheme.
//! * [`experiments`]: coupled Monte Carlo convergence studies.
//! * [`config`], [`io`], [`cli`]: configuration, file formats, command line.

// Negated comparisons such as `!(x > 0.0)` are used on purpose: they also
// reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod heat_fem;
pub mod heat_reference;
pub mod io;
pub mod kernels;
pub mod noise;
pub mod price_fd;
pub mod profile;
pub mod quadrature;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
