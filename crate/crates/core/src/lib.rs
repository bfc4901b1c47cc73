//! Inverse design of passive acoustic scatterers by density-based topology
//! optimization of the 2D Helmholtz equation.
//!
//! The pipeline is: design variables on a grid, filtered and projected to
//! physical densities, mapped to acoustic coefficients, solved per
//! frequency with a sparse direct solver, compared against target
//! far-field magnitudes on an arc, differentiated by the adjoint method and
//! updated with the method of moving asymptotes.

pub mod ablation;
pub mod domain;
pub mod error;
pub mod farfield;
pub mod interp;
pub mod io;
pub mod scalar;
pub mod solver;
pub mod objective;
pub mod optimizer;
pub mod targets;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use scalar::Real;

/// Double-precision density field.
pub type DensityField = domain::DensityField<f64>;
/// Double-precision coefficient fields.
pub type CoefficientFields = domain::CoefficientFields<f64>;
