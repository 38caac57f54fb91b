//! Open-system dynamics of an electron spin coupled to projected molecular
//! vibrations.
//!
//! Pipeline: [`projection::project`] rotates the vibrational modes so that at
//! most three primary modes carry the spin coupling, [`rates`] gives their
//! thermal lifetimes from the residual bath, [`dynamics`] builds and
//! propagates the Lindblad model, and [`analysis`] reduces trajectories.
//!
//! Units: energies and frequencies in cm⁻¹ (ħ = 1), time in ps, temperature
//! in K, magnetic field in T.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod projection;
pub mod quantum;
pub mod rates;
pub mod units;

pub use error::{Error, Result};
pub use units::PhysicalConstants;
