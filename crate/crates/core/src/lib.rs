//! Simulation and analysis of ferromagnetic gyroscopes: a hard ferromagnet
//! whose angular momentum is dominated by intrinsic electron spin.
//!
//! Each module maps to one capability. `dynamics` integrates the locked-spin
//! equations of motion for a free FG, the magnetic brick control and an FG
//! levitated over a type-I superconductor. `spectral` turns trajectories
//! into pickup-loop flux and spectral lines. `levitation` finds equilibria
//! and the precession suppression they cause. `sensitivity` holds the noise
//! budget and `exotic` the reach for pseudoscalar spin-spin couplings.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod exotic;
pub mod levitation;
pub mod model;
pub mod sensitivity;
pub mod spectral;

pub use error::{FgError, Result};
