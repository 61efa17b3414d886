//! Laser-deflection simulation and state tomography for an atomic ground
//! state manifold.

pub mod beamline;
pub mod config;
pub mod error;
pub mod observables;
pub mod par;
pub mod pumping;
pub mod spin;
pub mod tomography;

pub use error::{Error, Result};
