//! Inversion of two-dimensional IR-CPMG relaxation data into T1-T2
//! distributions with locally adapted (uniform-penalty) Tikhonov
//! regularization.
//!
//! The pipeline is: build a [`model::KernelPair`] from the acquisition and
//! relaxation grids, then call [`upen::upen_run`] on the data vector.
//! [`upen::tikhonov_solve`] gives the single-parameter baseline.

mod error;

pub mod cli;
pub mod io;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod solvers;
pub mod upen;

pub use error::{Error, Result};
