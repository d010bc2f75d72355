//! Numerical laboratory for branching Brownian motion in a random branching
//! environment (BBMRE).
//!
//! The crate has four layers that cross-check each other:
//!
//! * [`env`]: random potentials `xi` (continuum and lattice) and their files.
//! * [`branching`]: exact Monte Carlo of the branching particle system.
//! * [`pde`]: finite-difference solvers for the randomised F-KPP equation and
//!   the parabolic Anderson model, plus front and quantile analytics.
//! * [`tilt`]: exponentially tilted path measures, their drift `b`, the tilted
//!   SDE and the calibration of tilt parameters.
//!
//! Shared statistics live in [`stats`]; per-replicate random streams in [`rng`].

pub mod branching;
pub mod env;
pub mod error;
pub mod pde;
pub mod rng;
pub mod stats;
pub mod tilt;

pub use error::{Error, Result};
