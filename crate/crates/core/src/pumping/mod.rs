//! Optical pumping and photon scattering under a travelling-wave laser.
//!
//! The full Lindblad master equation is integrated in the rotating frame,
//! with rates in units of the natural linewidth Γ. Momentum is counted in
//! photon recoils along the laser's propagation direction.

mod generator;
mod integrator;
mod laser;
mod propagate;
mod structure;

pub use generator::{build_generator, Generator};
pub use integrator::{DormandPrince, IntegratorOptions, StepStats};
pub use laser::LaserField;
pub use propagate::{
    propagate, propagate_matrix, propagate_to_times, propagate_with, simulate_preparation, BeamParameters,
    PropagationDiagnostics, PropagationOptions, PumpingResult,
};
pub use structure::{hyperfine_amplitude, AtomicStructure, DipoleFactor, Manifold};
