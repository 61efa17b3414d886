//! Run configuration: one TOML document describing the atom, both laser
//! regions, the beamline and the tomography measurement set.
//!
//! Physical quantities carry their unit in the key name. Rates and detunings
//! are in units of the natural linewidth Γ. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pumping::{AtomicStructure, BeamParameters};
use crate::spin::{IncidentDirection, PolarisationMode};
use crate::Error;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructurePreset {
    SodiumD2,
    TwoLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(default = "default_preset")]
    pub preset: StructurePreset,
    /// Keep only the cycling transition of the reference ground manifold.
    #[serde(default)]
    pub closed_transition: bool,
    #[serde(default)]
    pub coupling_cutoff_over_gamma: Option<f64>,
    /// Replaces the preset entirely when given.
    #[serde(default)]
    pub explicit: Option<AtomicStructure>,
}

fn default_preset() -> StructurePreset {
    StructurePreset::SodiumD2
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            preset: StructurePreset::SodiumD2,
            closed_transition: false,
            coupling_cutoff_over_gamma: None,
            explicit: None,
        }
    }
}

impl StructureConfig {
    pub fn build(&self) -> Result<AtomicStructure, Error> {
        let mut s = match (&self.explicit, self.preset) {
            (Some(s), _) => s.clone(),
            (None, StructurePreset::SodiumD2) => AtomicStructure::sodium_d2(),
            (None, StructurePreset::TwoLevel) => AtomicStructure::two_level(),
        };
        if let Some(c) = self.coupling_cutoff_over_gamma {
            s.coupling_cutoff_over_gamma = c;
        }
        if self.closed_transition {
            let [g, e] = s.reference_transition;
            s = s.with_closed_transition(g, e);
        }
        s.validate()
            .map_err(|e| Error::Config(format!("structure: {}", e.to_string().trim_start_matches("configuration error: "))))?;
        Ok(s)
    }
}

/// One laser region. The interaction time follows from the beam length and
/// the atom's speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserRegionConfig {
    pub rabi_frequency_over_gamma: f64,
    pub detuning_over_gamma: f64,
    pub interaction_length_m: f64,
}

impl LaserRegionConfig {
    /// Interaction time in 1/Γ for an atom at `velocity_m_per_s`.
    pub fn interaction_time(&self, velocity_m_per_s: f64, linewidth_per_s: f64) -> f64 {
        self.interaction_length_m / velocity_m_per_s * linewidth_per_s
    }

    pub fn beam(&self, interaction_time: f64) -> BeamParameters {
        BeamParameters {
            rabi_frequency: self.rabi_frequency_over_gamma,
            detuning: self.detuning_over_gamma,
            interaction_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamlineConfig {
    pub mean_velocity_m_per_s: f64,
    pub velocity_fwhm_fraction: f64,
    /// Velocity classes sampled across ±3σ (1 disables averaging).
    pub velocity_samples: usize,
    pub flight_length_m: f64,
    /// Recoil velocity ħk/M, used only to express positions in millimetres.
    pub recoil_velocity_m_per_s: f64,
    /// Fraction of atoms entering in the reference ground manifold.
    pub reference_manifold_fraction: f64,
    /// RMS width of each detector peak from beam collimation, in ħk.
    pub source_width_hbar_k: f64,
    pub bin_width_hbar_k: f64,
    pub detector_min_hbar_k: f64,
    pub detector_max_hbar_k: f64,
    /// Atoms per profile; sets the count scale and the Poisson noise level.
    pub atoms_per_profile: f64,
    #[serde(default)]
    pub shot_noise: bool,
    /// Add the preparation beam's own recoil, projected on the deflection
    /// direction.
    #[serde(default)]
    pub include_preparation_recoil: bool,
}

impl Default for BeamlineConfig {
    fn default() -> Self {
        Self {
            mean_velocity_m_per_s: 1000.0,
            velocity_fwhm_fraction: 0.10,
            velocity_samples: 9,
            flight_length_m: 1.0,
            recoil_velocity_m_per_s: 0.029_46,
            reference_manifold_fraction: 0.625,
            source_width_hbar_k: 3.0,
            bin_width_hbar_k: 0.25,
            detector_min_hbar_k: -80.0,
            detector_max_hbar_k: 80.0,
            atoms_per_profile: 1.0e6,
            shot_noise: false,
            include_preparation_recoil: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    pub directions: Vec<IncidentDirection>,
    pub modes: Vec<PolarisationMode>,
    /// Label of the direction used for orientation measurements and scans.
    pub orientation_direction: String,
    /// Per-measurement uncertainty in ħk (0 means unweighted).
    #[serde(default)]
    pub momentum_uncertainty_hbar_k: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        let (s, c) = (3f64.sqrt() / 2.0, 0.5);
        Self {
            directions: vec![
                IncidentDirection::new("axial", [0.0, 0.0, -1.0]),
                IncidentDirection::new("oblique", [0.0, s, -c]),
            ],
            modes: PolarisationMode::PURE.to_vec(),
            orientation_direction: "axial".into(),
            momentum_uncertainty_hbar_k: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub theta_min_rad: f64,
    pub theta_max_rad: f64,
    pub theta_points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            theta_min_rad: 0.0,
            theta_max_rad: std::f64::consts::TAU,
            theta_points: 73,
        }
    }
}

impl ScanConfig {
    pub fn grid(&self) -> Vec<f64> {
        if self.theta_points == 1 {
            return vec![self.theta_min_rad];
        }
        let step = (self.theta_max_rad - self.theta_min_rad) / (self.theta_points - 1) as f64;
        (0..self.theta_points).map(|k| self.theta_min_rad + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Overall scale applied to every K coefficient.
    #[serde(default = "one")]
    pub sigma_u: f64,
    #[serde(default)]
    pub structure: StructureConfig,
    pub preparation: LaserRegionConfig,
    pub deflection: LaserRegionConfig,
    #[serde(default)]
    pub beamline: BeamlineConfig,
    #[serde(default)]
    pub tomography: TomographyConfig,
    #[serde(default)]
    pub scan: ScanConfig,
}

fn one() -> f64 {
    1.0
}

impl Default for RunConfig {
    /// The shipped experiment-like configuration.
    fn default() -> Self {
        Self {
            seed: 1,
            sigma_u: 1.0,
            structure: StructureConfig::default(),
            preparation: LaserRegionConfig {
                rabi_frequency_over_gamma: 1.0,
                detuning_over_gamma: 0.0,
                interaction_length_m: 1.6e-3,
            },
            deflection: LaserRegionConfig {
                rabi_frequency_over_gamma: 1.0,
                detuning_over_gamma: 0.0,
                interaction_length_m: 8.287e-4,
            },
            beamline: BeamlineConfig::default(),
            tomography: TomographyConfig::default(),
            scan: ScanConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), Error> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), Error> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be >= 0 and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<(), Error> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, Error> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), Error> {
        finite("sigma_u", self.sigma_u)?;
        if self.sigma_u == 0.0 {
            return Err(Error::Config("sigma_u must be non-zero".into()));
        }
        for (region, r) in [("preparation", &self.preparation), ("deflection", &self.deflection)] {
            non_negative(&format!("{region}.rabi_frequency_over_gamma"), r.rabi_frequency_over_gamma)?;
            finite(&format!("{region}.detuning_over_gamma"), r.detuning_over_gamma)?;
            non_negative(&format!("{region}.interaction_length_m"), r.interaction_length_m)?;
        }
        let b = &self.beamline;
        positive("beamline.mean_velocity_m_per_s", b.mean_velocity_m_per_s)?;
        non_negative("beamline.velocity_fwhm_fraction", b.velocity_fwhm_fraction)?;
        if b.velocity_fwhm_fraction >= 0.5 {
            return Err(Error::Config(
                "beamline.velocity_fwhm_fraction must be below 0.5 so sampled velocities stay positive".into(),
            ));
        }
        if b.velocity_samples == 0 {
            return Err(Error::Config("beamline.velocity_samples must be at least 1".into()));
        }
        positive("beamline.flight_length_m", b.flight_length_m)?;
        positive("beamline.recoil_velocity_m_per_s", b.recoil_velocity_m_per_s)?;
        if !(0.0..=1.0).contains(&b.reference_manifold_fraction) {
            return Err(Error::Config(format!(
                "beamline.reference_manifold_fraction must lie in [0, 1], got {}",
                b.reference_manifold_fraction
            )));
        }
        positive("beamline.source_width_hbar_k", b.source_width_hbar_k)?;
        positive("beamline.bin_width_hbar_k", b.bin_width_hbar_k)?;
        finite("beamline.detector_min_hbar_k", b.detector_min_hbar_k)?;
        finite("beamline.detector_max_hbar_k", b.detector_max_hbar_k)?;
        if b.detector_max_hbar_k <= b.detector_min_hbar_k + b.bin_width_hbar_k {
            return Err(Error::Config(
                "beamline.detector_max_hbar_k must exceed detector_min_hbar_k by more than one bin".into(),
            ));
        }
        positive("beamline.atoms_per_profile", b.atoms_per_profile)?;

        let t = &self.tomography;
        if t.directions.is_empty() {
            return Err(Error::Config("tomography.directions must not be empty".into()));
        }
        for (i, d) in t.directions.iter().enumerate() {
            d.transverse_basis()
                .map_err(|e| Error::Config(format!("tomography.directions[{i}]: {e}")))?;
            if t.directions[..i].iter().any(|o| o.label == d.label) {
                return Err(Error::Config(format!("tomography.directions: duplicate label '{}'", d.label)));
            }
        }
        if t.modes.iter().any(|m| *m == PolarisationMode::Elliptical) {
            return Err(Error::Config("tomography.modes: only pure polarisations can be measured".into()));
        }
        if !t.directions.iter().any(|d| d.label == t.orientation_direction) {
            return Err(Error::Config(format!(
                "tomography.orientation_direction '{}' is not among tomography.directions",
                t.orientation_direction
            )));
        }
        non_negative("tomography.momentum_uncertainty_hbar_k", t.momentum_uncertainty_hbar_k)?;

        let s = &self.scan;
        finite("scan.theta_min_rad", s.theta_min_rad)?;
        finite("scan.theta_max_rad", s.theta_max_rad)?;
        if s.theta_points == 0 {
            return Err(Error::Config("scan.theta_points must be at least 1".into()));
        }
        self.structure.build()?;
        Ok(())
    }

    pub fn structure(&self) -> Result<AtomicStructure, Error> {
        self.structure.build()
    }

    pub fn orientation_direction(&self) -> &IncidentDirection {
        self.tomography
            .directions
            .iter()
            .find(|d| d.label == self.tomography.orientation_direction)
            .expect("validated")
    }

    pub fn direction(&self, label: &str) -> Option<&IncidentDirection> {
        self.tomography.directions.iter().find(|d| d.label == label)
    }

    /// Deflection beam parameters for an atom at the mean velocity.
    pub fn mean_deflection_beam(&self) -> Result<BeamParameters, Error> {
        let s = self.structure()?;
        let t = self
            .deflection
            .interaction_time(self.beamline.mean_velocity_m_per_s, s.linewidth_per_s);
        Ok(self.deflection.beam(t))
    }

    pub fn mean_preparation_beam(&self) -> Result<BeamParameters, Error> {
        let s = self.structure()?;
        let t = self
            .preparation
            .interaction_time(self.beamline.mean_velocity_m_per_s, s.linewidth_per_s);
        Ok(self.preparation.beam(t))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
