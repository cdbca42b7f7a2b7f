//! Optical tomography of a collective atomic qutrit.
//!
//! The crate models the polarization-rotation signal produced by a
//! precessing ground-state ensemble, inverts envelope fits back to partial
//! density-matrix information, and reconstructs the full state by
//! constrained least squares over Cholesky factors.

pub mod angmom;
pub mod error;
pub mod forward;
pub mod lineshape;
pub mod liouville;
pub mod measure;
pub mod montecarlo;
pub mod observables;
pub mod optimize;
pub mod qstate;
pub mod reconstruct;
pub mod seed;
pub mod trace;

pub use error::{Error, Result};
