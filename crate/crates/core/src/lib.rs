//! Numerical toolkit for the Perlick type-I superintegrable system on
//! curvature-deformed manifolds.
//!
//! The crate is organised bottom-up:
//!
//! - [`kappa`]: curvature-dependent trigonometry `Ck`, `Sk`, `Tk`.
//! - [`model`]: the Hamiltonian in the unified `ξ` chart and in the
//!   `(r, p_r)` charts, effective potential, energy bounds, turning points.
//! - [`symmetries`]: shift and ladder functions and the complex constants of
//!   motion `X±`, `Y±`, `Z±`, angular momentum and the flat Runge–Lenz vector.
//! - [`poisson`]: finite-difference Poisson brackets and a registry of the
//!   bracket relations of the symmetry algebra.
//! - [`dynamics`]: adaptive embedded Runge–Kutta integration with
//!   conservation diagnostics, frequency estimation and closure detection.
//! - [`orbits`]: algebraic planar orbits (generalized conic sections) and
//!   orbit classification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod kappa;
pub mod model;
pub mod orbits;
pub mod poisson;
pub mod symmetries;

pub use error::{Error, Result};
pub use kappa::Curvature;
pub use model::{Beta, Hemisphere, ModelParams, PhasePoint, RPoint};
