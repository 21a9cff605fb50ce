//! Fourth-order nonlinear Laplacian denoising of 1D signals and 2D images,
//! with a total-variation baseline for comparison.
//!
//! [`nl_filter`] evolves `u_t = -L(F(L u)) - lambda (u - u0)` with a saturating
//! flux `F`; [`tv_baseline`] runs the regularized ROF flow. [`signals`]
//! generates test data and metrics, [`data_io`] reads and writes CSV, PGM and
//! SVG, and [`experiment`] ties them together.

pub mod data_io;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod grid;
pub mod grid_ops;
pub mod nl_filter;
pub mod parallel;
pub mod report;
pub mod signals;
pub mod tv_baseline;

pub use error::{Error, Result};
pub use grid::{Field2D, Signal1D};
