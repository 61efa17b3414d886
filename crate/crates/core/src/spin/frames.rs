//! Natural and laser frames.
//!
//! Natural frame: z along the preparation laser, x along the atomic beam,
//! y completing a right-handed set. The laser frame of a deflection beam
//! travelling along `n` is
//!
//! * linear light: z along the polarisation, x along `n`;
//! * circular light: z along `n`, x along the atomic beam (projected
//!   transverse to `n`).
//!
//! In both cases y = z × x. Linear polarisation angles are measured in the
//! plane transverse to `n` from `u` (the atomic beam projected transverse to
//! `n`) towards `v = n × u`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::density::rotate_density;
use super::{DensityMatrix, EulerAngles, Frame, PolarisationMode, SpinError};

pub const ATOMIC_BEAM_AXIS: [f64; 3] = [1.0, 0.0, 0.0];

/// One configured incidence direction of the deflection laser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentDirection {
    pub label: String,
    /// Propagation direction in natural-frame coordinates.
    pub vector: [f64; 3],
}

impl IncidentDirection {
    pub fn new(label: impl Into<String>, vector: [f64; 3]) -> Self {
        Self {
            label: label.into(),
            vector,
        }
    }

    pub fn unit(&self) -> Result<Vector3<f64>, SpinError> {
        let v = Vector3::from(self.vector);
        let n = v.norm();
        if !(n.is_finite() && n > 1e-12) {
            return Err(SpinError::Geometry(format!(
                "direction '{}' has zero or non-finite length",
                self.label
            )));
        }
        Ok(v / n)
    }

    /// Transverse basis `(u, v)` used to measure linear polarisation angles.
    pub fn transverse_basis(&self) -> Result<(Vector3<f64>, Vector3<f64>), SpinError> {
        let n = self.unit()?;
        let beam = Vector3::from(ATOMIC_BEAM_AXIS);
        let u = beam - n * n.dot(&beam);
        let un = u.norm();
        if un < 1e-9 {
            return Err(SpinError::Geometry(format!(
                "direction '{}' is parallel to the atomic beam",
                self.label
            )));
        }
        let u = u / un;
        Ok((u, n.cross(&u)))
    }

    /// Real polarisation vector of a linear mode, in natural coordinates.
    pub fn linear_polarisation(&self, mode: PolarisationMode) -> Result<Vector3<f64>, SpinError> {
        let angle = mode.linear_angle().ok_or_else(|| {
            SpinError::Geometry(format!("{mode} is not a linear polarisation"))
        })?;
        let (u, v) = self.transverse_basis()?;
        Ok(u * angle.cos() + v * angle.sin())
    }
}

/// Rotation taking natural axes onto the laser-frame axes of `mode` incident
/// along `direction` (columns are the laser x, y, z axes).
pub fn laser_frame_rotation(direction: &IncidentDirection, mode: PolarisationMode) -> Result<EulerAngles, SpinError> {
    let n = direction.unit()?;
    let (z_axis, x_axis) = if mode.is_linear() {
        (direction.linear_polarisation(mode)?, n)
    } else if mode.is_circular() {
        let (u, _) = direction.transverse_basis()?;
        (n, u)
    } else {
        return Err(SpinError::Geometry(
            "a deflection laser needs a pure polarisation (linear or circular)".into(),
        ));
    };
    if z_axis.dot(&x_axis).abs() > 1e-9 {
        return Err(SpinError::Geometry(
            "polarisation is not orthogonal to the propagation direction".into(),
        ));
    }
    let y_axis = z_axis.cross(&x_axis);
    let r = Matrix3::from_columns(&[x_axis, y_axis, z_axis]);
    EulerAngles::from_rotation_matrix(&r)
}

/// Express a natural-frame density matrix in the laser frame of the given
/// deflection beam: `ρ^L = D(R⁻¹) ρ^N D(R⁻¹)†`.
pub fn natural_to_laser(
    rho: &DensityMatrix,
    direction: &IncidentDirection,
    mode: PolarisationMode,
) -> Result<DensityMatrix, SpinError> {
    if rho.frame() != Frame::Natural {
        return Err(SpinError::FrameMismatch {
            expected: Frame::Natural,
            found: rho.frame(),
        });
    }
    let angles = laser_frame_rotation(direction, mode)?;
    Ok(rotate_density(rho, &angles.inverse())?.with_frame(Frame::Laser))
}
