use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolarisationMode {
    Pi0,
    Pi45,
    Pi90,
    Pi135,
    SigmaPlus,
    SigmaMinus,
    Elliptical,
}

impl PolarisationMode {
    /// The six pure deflection polarisations.
    pub const PURE: [PolarisationMode; 6] = [
        PolarisationMode::Pi0,
        PolarisationMode::Pi45,
        PolarisationMode::Pi90,
        PolarisationMode::Pi135,
        PolarisationMode::SigmaPlus,
        PolarisationMode::SigmaMinus,
    ];

    /// Polarisation angle in the transverse plane for linear modes.
    pub fn linear_angle(self) -> Option<f64> {
        use std::f64::consts::PI;
        match self {
            PolarisationMode::Pi0 => Some(0.0),
            PolarisationMode::Pi45 => Some(PI / 4.0),
            PolarisationMode::Pi90 => Some(PI / 2.0),
            PolarisationMode::Pi135 => Some(3.0 * PI / 4.0),
            _ => None,
        }
    }

    pub fn is_linear(self) -> bool {
        self.linear_angle().is_some()
    }

    pub fn is_circular(self) -> bool {
        matches!(self, PolarisationMode::SigmaPlus | PolarisationMode::SigmaMinus)
    }

    pub fn label(self) -> &'static str {
        match self {
            PolarisationMode::Pi0 => "pi0",
            PolarisationMode::Pi45 => "pi45",
            PolarisationMode::Pi90 => "pi90",
            PolarisationMode::Pi135 => "pi135",
            PolarisationMode::SigmaPlus => "sigma+",
            PolarisationMode::SigmaMinus => "sigma-",
            PolarisationMode::Elliptical => "elliptical",
        }
    }
}

impl fmt::Display for PolarisationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolarisationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pi0" | "pi_0" => Ok(PolarisationMode::Pi0),
            "pi45" | "pi_45" => Ok(PolarisationMode::Pi45),
            "pi90" | "pi_90" => Ok(PolarisationMode::Pi90),
            "pi135" | "pi_135" => Ok(PolarisationMode::Pi135),
            "sigma+" | "sigma_plus" | "sigmaplus" => Ok(PolarisationMode::SigmaPlus),
            "sigma-" | "sigma_minus" | "sigmaminus" => Ok(PolarisationMode::SigmaMinus),
            "elliptical" => Ok(PolarisationMode::Elliptical),
            other => Err(format!("unknown polarisation mode '{other}'")),
        }
    }
}

impl TryFrom<String> for PolarisationMode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolarisationMode> for String {
    fn from(m: PolarisationMode) -> Self {
        m.label().to_owned()
    }
}

/// Polarisation vector in spherical components `(e_{-1}, e_0, e_{+1})`
/// with `e_q = ê_q* · ε`, so `e_q` is the amplitude driving `Δm = q`.
/// The global phase is fixed by making the first non-zero component real
/// and positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarisationState {
    pub mode: PolarisationMode,
    pub waveplate_angle: f64,
    pub spherical: [Complex64; 3],
}

impl PolarisationState {
    /// From a Cartesian (complex) polarisation vector; normalised and
    /// phase-canonicalised.
    pub fn from_cartesian(mode: PolarisationMode, waveplate_angle: f64, eps: [Complex64; 3]) -> Self {
        let s = FRAC_1_SQRT_2;
        let e_plus = -(eps[0] - I * eps[1]) * s;
        let e_minus = (eps[0] + I * eps[1]) * s;
        Self::from_spherical(mode, waveplate_angle, [e_minus, eps[2], e_plus])
    }

    pub fn from_spherical(mode: PolarisationMode, waveplate_angle: f64, comps: [Complex64; 3]) -> Self {
        let norm = comps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let mut spherical = comps.map(|c| c / norm);
        if let Some(lead) = spherical.iter().find(|c| c.norm() > 1e-12) {
            let phase = lead.conj() / lead.norm();
            for c in spherical.iter_mut() {
                *c *= phase;
            }
        }
        Self {
            mode,
            waveplate_angle,
            spherical,
        }
    }

    /// Pure polarisation expressed in its own laser frame: linear light along
    /// the quantisation axis, circular light about it.
    pub fn laser_frame(mode: PolarisationMode) -> Self {
        let comps = match mode {
            PolarisationMode::SigmaPlus => [ZERO, ZERO, ONE],
            PolarisationMode::SigmaMinus => [ONE, ZERO, ZERO],
            _ => [ZERO, ONE, ZERO],
        };
        Self::from_spherical(mode, 0.0, comps)
    }

    /// Amplitude for `Δm = q`, `q ∈ {-1, 0, 1}`.
    pub fn component(&self, q: i32) -> Complex64 {
        self.spherical[(q + 1) as usize]
    }

    pub fn intensities(&self) -> [f64; 3] {
        self.spherical.map(|c| c.norm_sqr())
    }

    /// Cartesian vector `ε = Σ_q e_q ê_q`.
    pub fn cartesian(&self) -> [Complex64; 3] {
        let s = FRAC_1_SQRT_2;
        let [em, e0, ep] = self.spherical;
        [(em - ep) * s, -I * (ep + em) * s, e0]
    }
}

/// Quarter-wave plate at angle `theta` to an x-polarised input beam
/// travelling along z. The plate has Jones matrix `R(θ) diag(1, -i) R(-θ)`,
/// so `θ = π/4` yields σ+ light.
pub fn waveplate_polarisation(theta: f64) -> PolarisationState {
    let (s, c) = theta.sin_cos();
    let ex = Complex64::new(c * c, -s * s);
    let ey = Complex64::new(s * c, s * c);
    PolarisationState::from_cartesian(PolarisationMode::Elliptical, theta, [ex, ey, ZERO])
}
