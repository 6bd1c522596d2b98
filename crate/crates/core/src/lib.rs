//! Frequency-domain full-waveform inversion by iteratively refined
//! wavefield reconstruction (IR-WRI) with compound regularization.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`] and [`diff`]: model grid, difference operators and adjoints.
//! - [`helmholtz`]: PML-stretched Helmholtz operator, forward solves and the
//!   relaxed wavefield reconstruction.
//! - [`prox`]: regularizer catalog, shrinkage and projection operators.
//! - [`subproblem`]: the regularized model update (inner ADMM with variable
//!   projection for the two-component regularizers).
//! - [`irwri`]: outer ADMM loop, stopping rule and frequency continuation.
//! - [`workbench`]: synthetic models, data simulation, file formats, run
//!   configuration and regularizer comparison.

pub mod diff;
pub mod error;
pub mod grid;
pub mod helmholtz;
pub mod irwri;
pub mod linalg;
pub mod prox;
pub mod subproblem;
pub mod workbench;

pub use error::{FwiError, Result};
pub use grid::{ModelGrid, ScalarField};
