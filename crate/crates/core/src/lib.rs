//! Forward solvers, higher-order linearization of Dirichlet-to-Neumann maps and
//! reconstruction drivers for the semilinear equation
//! `−Δu + q(∇u·∇u) + V(x, u) = 0` on two-dimensional grids.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod harmonic;
pub mod inverse;
pub mod io;
pub mod linearize;
pub mod semilinear;

pub use domain::{BoundaryArc, BoundaryMask, BoundaryTrace, CircleParams, Domain, DomainConfig, Field, Shape};
pub use error::{Error, Result};
