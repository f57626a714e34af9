//! Numerical toolkit for Ginzburg–Landau problems with step magnetic fields.

pub mod diagnostics;
pub mod effective;
pub mod eigen;
pub mod error;
pub mod gldomain;
pub mod halfplane;
pub mod io;
pub mod lattice;
pub mod optim;
pub mod polar;
pub mod spectral1d;

pub use error::{Error, Result};
