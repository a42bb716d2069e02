//! Numerical simulator and diagnostics for nonlinear scalar waves satisfying
//! the null condition on the exterior of an extremal Reissner-Nordstrom black
//! hole.
//!
//! The crate evolves the radiation field `phi = r psi` on a uniform
//! double-null lattice with a zonal pseudo-spectral angular layer, carries
//! the horizon-regular transversal combination `(2r/D) Lbar phi` as an
//! evolved auxiliary, and measures what the late-time theory quantifies:
//! power-law tails, transversal-derivative non-decay and second-derivative
//! growth along the horizon, nonlinear horizon charges, and weighted null
//! energy fluxes.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod modes;
pub mod output;
pub mod pipeline;

pub use error::{ConfigError, DiagnosticsError, EvolutionError, GeometryError, ModesError};
