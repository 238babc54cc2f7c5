//! Numerical laboratory for Atiyah-Hitchin geometry, Fueter-section families on
//! product 3-manifolds and their Z2-valued harmonic limits.

pub mod ah_geometry;
pub mod diagnostics;
pub mod error;
pub mod fueter_families;
pub mod gibbons_hawking;
pub mod multivalued;
pub mod ode;
pub mod plot;
pub mod quadrature;
pub mod rational_maps;
pub mod runner;
pub mod z2_harmonic;

pub use error::{Error, Result};
