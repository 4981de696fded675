//! Randomized probing of the wave-equation Hessian.
//!
//! The crate bundles a spectral acoustic solver with its exact discrete
//! adjoint, Born modeling and reverse-time migration, a basis of elementary
//! pseudodifferential operators, a tight curvelet frame, ray-traced
//! illumination masks, and the least-squares fitting that turns a handful of
//! Hessian applications into an approximate inverse.

pub mod assets;
pub mod born;
pub mod curvelet;
pub mod error;
pub mod grid;
pub mod harness;
pub mod illumination;
pub mod par;
pub mod pdo;
pub mod probing;
pub mod theory;
pub mod wavesim;

pub use error::{Error, Result};
pub use grid::{mse, ModelGrid};
