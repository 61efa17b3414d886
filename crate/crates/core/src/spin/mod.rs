//! Angular-momentum machinery: Wigner matrices, coupling coefficients,
//! density matrices over a hyperfine manifold, polarisation states and the
//! natural/laser frame geometry.

mod coupling;
mod density;
mod frames;
mod polarisation;
mod wigner;

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use thiserror::Error;

pub use coupling::{clebsch_gordan, six_j};
pub use density::{rotate_density, DensityMatrix, Frame};
pub use frames::{laser_frame_rotation, natural_to_laser, IncidentDirection, ATOMIC_BEAM_AXIS};
pub use polarisation::{waveplate_polarisation, PolarisationMode, PolarisationState};
pub use wigner::{wigner_big_d, wigner_small_d, MAX_TWICE_J};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("angular momentum 2j = {twice_j} is outside the supported range 0..=8")]
    UnsupportedMomentum { twice_j: u32 },
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("density matrix invariant violated: {0}")]
    Invariant(String),
    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("ill-defined laser geometry: {0}")]
    Geometry(String),
}

pub(crate) fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0, "factorial of negative argument {n}");
    (2..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// z-y-z Euler angles of an active rotation, each kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn wrap(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, SpinError> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(SpinError::NonFinite(name));
            }
        }
        Ok(Self {
            alpha: wrap(alpha),
            beta: wrap(beta),
            gamma: wrap(gamma),
        })
    }

    pub fn identity() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            alpha: wrap(-self.gamma),
            beta: wrap(-self.beta),
            gamma: wrap(-self.alpha),
        }
    }

    /// Cartesian matrix `Rz(α) Ry(β) Rz(γ)`.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rot_z(self.alpha) * rot_y(self.beta) * rot_z(self.gamma)
    }

    /// Decompose a proper rotation matrix. Gimbal-locked cases put the whole
    /// rotation about z into `alpha`.
    pub fn from_rotation_matrix(r: &Matrix3<f64>) -> Result<Self, SpinError> {
        let cb = r[(2, 2)].clamp(-1.0, 1.0);
        let beta = cb.acos();
        let sb = beta.sin();
        let (alpha, gamma) = if sb.abs() > 1e-12 {
            (r[(1, 2)].atan2(r[(0, 2)]), r[(2, 1)].atan2(-r[(2, 0)]))
        } else if cb > 0.0 {
            (r[(1, 0)].atan2(r[(0, 0)]), 0.0)
        } else {
            // Rz(α) Ry(π): first column is (-cos α, -sin α, 0)
            ((-r[(1, 0)]).atan2(-r[(0, 0)]), 0.0)
        };
        Self::new(alpha, beta, gamma)
    }
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}
