//! Numerical toolkit for the parameter space of critically marked polynomial
//! families: periodic cycles and their multiplier spectra, Green and Lyapunov
//! potentials, and discrete bifurcation measures on parameter slices.
//!
//! The family under study is the degree-`d` polynomial `P` with marked
//! critical points `(0, c_1, ..., c_{d-2})` normalized by `P(0) = a^d`,
//! parametrized by `(c, a)`. Everything downstream — cycle counting,
//! multiplier characteristic polynomials, escape-rate potentials, slice
//! fields and equidistribution diagnostics — is built on top of that family.

pub mod arith;
pub mod cycles;
pub mod error;
pub mod family;
pub mod paramspace;
pub mod poly;
pub mod potentials;
pub(crate) mod util;

pub use error::{Error, Result};
