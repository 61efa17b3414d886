//! Orientation, alignment and coherence parameters.
//!
//! The coefficient formulas below assume the orientation measurements use a
//! deflection beam travelling along natural −z, so that in the σ+ laser frame
//! the natural sublevel `m` appears as `−m`. Under that geometry
//!
//! ```text
//! P_o = K_2 L⊥2 + K_1 L⊥1
//! P_a = K^a_2 (ρ_{2,0} + ρ_{0,-2}) + K^a_1 ρ_{1,-1}
//! P_g = K^g Re ρ_{2,-2}
//! ```
//!
//! hold exactly (for σ_u = 1) for every state of the F = 2 manifold, given the
//! deflection parameters of the σ+ and π modes.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dparams::{deflected_momentum, DeflectionParameterSet};
use crate::spin::{natural_to_laser, DensityMatrix, Frame, IncidentDirection, PolarisationMode};
use crate::Error;

/// Threshold below which `K_2` is treated as zero.
pub const K2_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParameters {
    pub l_perp_2: f64,
    pub l_perp_1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KCoefficients {
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCoefficients {
    pub k2: f64,
    pub k1: f64,
}

/// The four linear and two circular momenta from one incidence direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMomenta {
    pub pi0: f64,
    pub pi45: f64,
    pub pi90: f64,
    pub pi135: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl ModeMomenta {
    pub fn get(&self, mode: PolarisationMode) -> Option<f64> {
        match mode {
            PolarisationMode::Pi0 => Some(self.pi0),
            PolarisationMode::Pi45 => Some(self.pi45),
            PolarisationMode::Pi90 => Some(self.pi90),
            PolarisationMode::Pi135 => Some(self.pi135),
            PolarisationMode::SigmaPlus => Some(self.sigma_plus),
            PolarisationMode::SigmaMinus => Some(self.sigma_minus),
            PolarisationMode::Elliptical => None,
        }
    }

    pub fn orientation(&self) -> f64 {
        orientation_parameter(self.sigma_minus, self.sigma_plus)
    }

    pub fn alignment(&self) -> Complex64 {
        alignment_parameter(self.pi0, self.pi90, self.pi45, self.pi135)
    }

    pub fn coherence(&self) -> f64 {
        coherence_parameter(self.pi0, self.pi90, self.pi45, self.pi135)
    }
}

pub fn orientation_parameter(p_sigma_minus: f64, p_sigma_plus: f64) -> f64 {
    p_sigma_minus - p_sigma_plus
}

pub fn alignment_parameter(p0: f64, p90: f64, p45: f64, p135: f64) -> Complex64 {
    Complex64::new(p0 - p90, p45 - p135)
}

pub fn coherence_parameter(p0: f64, p90: f64, p45: f64, p135: f64) -> f64 {
    (p0 + p90) - (p45 + p135)
}

fn require_set(dset: &DeflectionParameterSet, mode_ok: bool, needed: &str) -> Result<(), Error> {
    if !mode_ok {
        return Err(Error::Config(format!("expected {needed} deflection parameters, got {}", dset.mode)));
    }
    if dset.f != 2 {
        return Err(Error::Config(format!("coefficients are defined for F = 2, got F = {}", dset.f)));
    }
    Ok(())
}

/// `K_2 = σ_u (D^{22} − D^{−2−2}) / 2` and `K_1 = σ_u (D^{11} − D^{−1−1})`.
pub fn k_coefficients(sigma_plus: &DeflectionParameterSet) -> Result<KCoefficients, Error> {
    require_set(sigma_plus, sigma_plus.mode == PolarisationMode::SigmaPlus, "sigma+")?;
    let d = |g| sigma_plus.d(g);
    Ok(KCoefficients {
        k2: sigma_plus.sigma_u * 0.5 * (d(2) - d(-2)),
        k1: sigma_plus.sigma_u * (d(1) - d(-1)),
    })
}

/// `K^a_2 = σ_u (√6/2)(D^{22} − D^{00})`, `K^a_1 = 2 σ_u (D^{22} − D^{11})`.
pub fn alignment_coefficients(pi: &DeflectionParameterSet) -> Result<AlignmentCoefficients, Error> {
    require_set(pi, pi.mode.is_linear(), "linear")?;
    let d = |g| pi.d(g);
    Ok(AlignmentCoefficients {
        k2: pi.sigma_u * 6f64.sqrt() * 0.5 * (d(2) - d(0)),
        k1: pi.sigma_u * 2.0 * (d(2) - d(1)),
    })
}

/// `K^g = σ_u (D^{22} + 3 D^{00} − 4 D^{11})`.
pub fn coherence_coefficient(pi: &DeflectionParameterSet) -> Result<f64, Error> {
    require_set(pi, pi.mode.is_linear(), "linear")?;
    let d = |g| pi.d(g);
    Ok(pi.sigma_u * (d(2) + 3.0 * d(0) - 4.0 * d(1)))
}

pub fn orientation_expansion(rho_n: &DensityMatrix, k: &KCoefficients) -> Result<f64, Error> {
    let s = shape_from_density(rho_n)?;
    Ok(k.k2 * s.l_perp_2 + k.k1 * s.l_perp_1)
}

pub fn alignment_expansion(rho_n: &DensityMatrix, ka: &AlignmentCoefficients) -> Result<Complex64, Error> {
    require_natural_f2(rho_n)?;
    Ok((rho_n.get(2, 0) + rho_n.get(0, -2)) * ka.k2 + rho_n.get(1, -1) * ka.k1)
}

pub fn coherence_expansion(rho_n: &DensityMatrix, kg: f64) -> Result<f64, Error> {
    require_natural_f2(rho_n)?;
    Ok(kg * rho_n.get(2, -2).re)
}

fn require_natural_f2(rho: &DensityMatrix) -> Result<(), Error> {
    if rho.frame() != Frame::Natural {
        return Err(crate::spin::SpinError::FrameMismatch {
            expected: Frame::Natural,
            found: rho.frame(),
        }
        .into());
    }
    if rho.f() != 2 {
        return Err(Error::Config(format!("shape parameters are defined for F = 2, got F = {}", rho.f())));
    }
    Ok(())
}

/// `L⊥2 = 2(ρ_{22} − ρ_{−2−2})`, `L⊥1 = ρ_{11} − ρ_{−1−1}`.
pub fn shape_from_density(rho_n: &DensityMatrix) -> Result<ShapeParameters, Error> {
    require_natural_f2(rho_n)?;
    Ok(ShapeParameters {
        l_perp_2: 2.0 * (rho_n.population(2) - rho_n.population(-2)),
        l_perp_1: rho_n.population(1) - rho_n.population(-1),
    })
}

/// `L⊥2 ≈ P_o / K_2`, neglecting the `L⊥1` term.
pub fn l_perp_from_measurement(p_o: f64, k2: f64) -> Result<f64, Error> {
    if !(k2.abs() >= K2_THRESHOLD) {
        return Err(Error::Conditioning(format!(
            "|K_2| = {:.3e} is below {K2_THRESHOLD:e}; the orientation measurement cannot be inverted",
            k2.abs()
        )));
    }
    Ok(p_o / k2)
}

/// Simulated momenta of a natural-frame state for all six pure modes from
/// one direction. `dsets` must hold a set for each mode.
pub fn measure_momenta(
    rho_n: &DensityMatrix,
    direction: &IncidentDirection,
    dsets: &[DeflectionParameterSet],
) -> Result<ModeMomenta, Error> {
    let p = |mode: PolarisationMode| -> Result<f64, Error> {
        let dset = dsets
            .iter()
            .find(|d| d.mode == mode)
            .ok_or_else(|| Error::Config(format!("no deflection parameters for {mode}")))?;
        let rho_l = natural_to_laser(rho_n, direction, mode)?;
        deflected_momentum(&rho_l, dset)
    };
    Ok(ModeMomenta {
        pi0: p(PolarisationMode::Pi0)?,
        pi45: p(PolarisationMode::Pi45)?,
        pi90: p(PolarisationMode::Pi90)?,
        pi135: p(PolarisationMode::Pi135)?,
        sigma_plus: p(PolarisationMode::SigmaPlus)?,
        sigma_minus: p(PolarisationMode::SigmaMinus)?,
    })
}

/// Equal superposition of `|2⟩` and `|−2⟩` with relative phase `phi`, whose
/// Δm = 4 coherence is `e^{iφ}/2`.
pub fn stretched_superposition(phi: f64) -> DensityMatrix {
    let mut psi = [Complex64::new(0.0, 0.0); 5];
    psi[4] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    psi[0] = Complex64::from_polar(FRAC_1_SQRT_2, -phi);
    DensityMatrix::from_state_vector(2, &psi, Frame::Natural).expect("normalised state")
}
