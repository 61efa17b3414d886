use num_complex::Complex64;

use crate::spin::{waveplate_polarisation, PolarisationMode, PolarisationState};
use crate::Error;

/// A travelling-wave laser acting on the atoms.
///
/// The spherical polarisation components and the propagation direction are
/// expressed in the frame of the density matrix being propagated: natural
/// coordinates for the preparation beam, laser coordinates for a deflection
/// beam. Rates and times are in units of the natural linewidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserField {
    pub polarisation: PolarisationState,
    pub rabi_frequency: f64,
    /// Laser minus reference transition frequency, in Γ (positive is blue).
    pub detuning: f64,
    pub propagation_direction: [f64; 3],
    pub interaction_time: f64,
}

impl LaserField {
    /// Preparation beam along natural z behind a quarter-wave plate at `theta`.
    pub fn preparation(theta: f64, rabi_frequency: f64, detuning: f64, interaction_time: f64) -> Self {
        Self {
            polarisation: waveplate_polarisation(theta),
            rabi_frequency,
            detuning,
            propagation_direction: [0.0, 0.0, 1.0],
            interaction_time,
        }
    }

    /// Deflection beam of a pure mode, written in its own laser frame.
    pub fn deflection(mode: PolarisationMode, rabi_frequency: f64, detuning: f64, interaction_time: f64) -> Self {
        let propagation_direction = if mode.is_circular() {
            [0.0, 0.0, 1.0]
        } else {
            [1.0, 0.0, 0.0]
        };
        Self {
            polarisation: PolarisationState::laser_frame(mode),
            rabi_frequency,
            detuning,
            propagation_direction,
            interaction_time,
        }
    }

    pub fn with_interaction_time(mut self, t: f64) -> Self {
        self.interaction_time = t;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rabi_frequency >= 0.0 && self.rabi_frequency.is_finite()) {
            return Err(Error::Config(format!("rabi frequency must be >= 0, got {}", self.rabi_frequency)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::Config("detuning must be finite".into()));
        }
        if !(self.interaction_time >= 0.0 && self.interaction_time.is_finite()) {
            return Err(Error::Config(format!(
                "interaction time must be >= 0, got {}",
                self.interaction_time
            )));
        }
        let n = self.propagation_direction;
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("propagation direction must be a unit vector (norm {norm})")));
        }
        let total: f64 = self.polarisation.intensities().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("polarisation is not normalised (norm² {total})")));
        }
        let eps = self.polarisation.cartesian();
        let longitudinal: Complex64 = eps.iter().zip(n.iter()).map(|(e, &c)| e * c).sum();
        if longitudinal.norm() > 1e-9 {
            return Err(Error::Spin(crate::spin::SpinError::Geometry(format!(
                "polarisation has a component {:.3e} along the propagation direction",
                longitudinal.norm()
            ))));
        }
        Ok(())
    }
}
