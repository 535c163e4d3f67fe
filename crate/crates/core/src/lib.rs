//! Numerical laboratory for semiclassical eigenfunction observability.
//!
//! The pipeline builds, at desk scale, every constructive stage behind an
//! observability inequality for eigenfunctions of −h²Δ + V with merely
//! bounded V: discretize the operator on a conformal chart, solve for
//! eigenpairs near a target energy, perforate the chart along the nodal set
//! with a maximal ball packing, solve the corrector equation on the
//! perforated domain, straighten the resulting Beltrami coefficient with an
//! FFT singular-integral solver, and measure weighted Carleman-type
//! inequalities — then fit how the observability ratio grows as h ↓ 0.

pub mod error;
pub mod fft;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod perforate;

pub mod beltrami;
pub mod corrector;
pub mod discretize;
pub mod eigensolve;

pub use error::{Error, Result};
