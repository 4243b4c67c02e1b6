//! Ground-penetrating-radar imaging: synthetic B-scans (analytic and 2D
//! FDTD), hyperbola detection, dielectric and depth estimation, and
//! pose-aware 3D back-projection migration.
//!
//! Conventions used throughout: positions are metres in a world frame with
//! z positive downwards and the survey surface at z = 0; times are seconds;
//! B-scan boxes are in (trace index, sample index) coordinates.

pub mod depth;
pub mod detect;
pub mod error;
pub mod eval;
pub mod forward;
pub mod io;
pub mod medium;
pub mod migrate;
pub mod parallel;
pub mod pose;

pub use error::{Error, Result};
