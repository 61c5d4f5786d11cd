//! Pseudo-perspective camera model for monocular morphable-model fitting.
//!
//! The crate is organised around five modules:
//!
//! - [`morphable`]: a linear morphable face model and a seeded toy head.
//! - [`camera`]: perspective, orthographic and pseudo-perspective projection,
//!   the shrinkage/focal conversions and analytic Jacobians.
//! - [`fitting`]: a Levenberg-Marquardt landmark fitter with a shrinkage prior,
//!   a sigmoid-bounded shrinkage parameter and a staged ortho-to-pseudo schedule.
//! - [`masking`]: raster guidance masks (hull fill, erosion, nose exclusion,
//!   sparse keep-back).
//! - [`harness`]: synthetic capture generation, benchmarking and
//!   focal/depth ambiguity scans.

pub mod camera;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod io;
pub mod jacobian;
pub mod masking;
pub mod morphable;

pub use error::{Error, Result};
pub use jacobian::JacobianBlock;
