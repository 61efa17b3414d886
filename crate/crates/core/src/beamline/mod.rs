//! Virtual beamline: preparation region, deflection region and free flight
//! to a scanning detector, averaged over the atomic velocity distribution.
//!
//! Detector positions are given in ħk-equivalent units: the displacement of
//! an atom at the mean velocity that received one photon momentum. An atom
//! at velocity `v` with transverse momentum `p` lands at `p v̄ / v`.
//! Positions are measured along the deflection beam's propagation direction.

mod fit;
mod io;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{BeamlineConfig, RunConfig};
use crate::observables::{
    compute_deflection_parameters_at_times, l_perp_from_measurement, retained_momentum, retained_population,
    deflected_momentum, DeflectionParameterSet,
};
use crate::par::par_map;
use crate::pumping::{propagate_to_times, AtomicStructure, LaserField, PropagationOptions};
use crate::spin::{natural_to_laser, DensityMatrix, Frame, IncidentDirection, PolarisationMode};
use crate::Error;

pub use fit::{bin_fraction, fit_double_gaussian, DoubleGaussianFit, FitWarning, GaussianPeak};
pub use io::{read_prepared, read_scan, write_l_perp, write_prepared, write_profile, write_scan, PreparedRow};

fn in_region(region: &str, e: Error) -> Error {
    match e {
        Error::Numerical { message, diagnostics } => Error::Numerical {
            message: format!("{region} region: {message}"),
            diagnostics,
        },
        Error::Config(m) => Error::Config(format!("{region} region: {m}")),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityClass {
    pub velocity: f64,
    /// Normalised so the weights of all classes sum to one.
    pub weight: f64,
}

/// Equally spaced velocities across ±3σ of a Gaussian with the configured
/// FWHM, weighted by the Gaussian density.
pub fn velocity_classes(b: &BeamlineConfig) -> Vec<VelocityClass> {
    let n = b.velocity_samples;
    let sigma = b.velocity_fwhm_fraction * b.mean_velocity_m_per_s / (8.0 * 2f64.ln()).sqrt();
    if n <= 1 || sigma == 0.0 {
        return vec![VelocityClass {
            velocity: b.mean_velocity_m_per_s,
            weight: 1.0,
        }];
    }
    let z: Vec<f64> = (0..n).map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64).collect();
    let w: Vec<f64> = z.iter().map(|z| (-0.5 * z * z).exp()).collect();
    let total: f64 = w.iter().sum();
    z.iter()
        .zip(&w)
        .map(|(z, w)| VelocityClass {
            velocity: b.mean_velocity_m_per_s + z * sigma,
            weight: w / total,
        })
        .collect()
}

/// Times for each class plus the ascending order they must be integrated in.
fn class_times(classes: &[VelocityClass], length: f64, linewidth: f64) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| classes[b].velocity.total_cmp(&classes[a].velocity));
    let times = order
        .iter()
        .map(|&i| length / classes[i].velocity * linewidth)
        .collect();
    (times, order)
}

/// Atoms of one velocity class after the preparation region and the free
/// segment behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedClass {
    pub class: VelocityClass,
    /// Natural-frame state of the reference manifold; its population scale
    /// is the fraction of atoms still in that manifold.
    pub state: DensityMatrix,
    /// Mean preparation recoil of atoms still in the reference manifold, ħk.
    pub state_momentum: f64,
    /// Fraction pumped into other ground manifolds.
    pub lost: f64,
    /// Mean preparation recoil of the pumped atoms, ħk.
    pub lost_momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBeam {
    pub theta: f64,
    pub classes: Vec<PreparedClass>,
}

impl PreparedBeam {
    /// Velocity-averaged fraction left in the reference manifold.
    pub fn reference_population(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.class.weight * c.state.population_scale())
            .sum()
    }

    /// Velocity-averaged reference-manifold state, population-weighted, with
    /// the average population as its scale.
    pub fn mean_state(&self) -> Result<DensityMatrix, Error> {
        let pop = self.reference_population();
        let f = self.classes[0].state.f();
        if pop <= 0.0 {
            return Ok(DensityMatrix::maximally_mixed(f, Frame::Natural).with_population_scale(0.0));
        }
        let d = self.classes[0].state.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for c in &self.classes {
            m += c.state.elements() * num_complex::Complex64::from(c.class.weight * c.state.population_scale());
        }
        Ok(DensityMatrix::from_unnormalised(f, &m, Frame::Natural)?)
    }
}

/// Isotropic atoms in the reference manifold crossing the preparation beam
/// with the waveplate at `theta`, one integration covering every velocity class.
pub fn prepare_beam(cfg: &RunConfig, structure: &AtomicStructure, theta: f64) -> Result<PreparedBeam, Error> {
    if !theta.is_finite() {
        return Err(Error::Config("waveplate angle must be finite".into()));
    }
    let classes = velocity_classes(&cfg.beamline);
    let p = &cfg.preparation;
    let (times, order) = class_times(&classes, p.interaction_length_m, structure.linewidth_per_s);
    let laser = LaserField::preparation(theta, p.rabi_frequency_over_gamma, p.detuning_over_gamma, 0.0);
    let f = structure.reference_transition[0];
    let gi = structure
        .ground_index(f)
        .ok_or_else(|| Error::Config(format!("reference ground manifold F={f} missing")))?;
    let opts = PropagationOptions {
        track_manifold_momentum: true,
        ..PropagationOptions::default()
    };
    let rho0 = DensityMatrix::maximally_mixed(f, Frame::Natural);
    let runs = propagate_to_times(&rho0, structure, &laser, &times, &opts).map_err(|e| in_region("preparation", e))?;
    let mut out: Vec<Option<PreparedClass>> = vec![None; classes.len()];
    for (run, &i) in runs.into_iter().zip(&order) {
        let by_manifold = run.momentum_by_manifold.as_deref().unwrap_or(&[]);
        let kept = run.manifolds[gi].population_scale();
        let lost = (run.total_population() - kept).max(0.0);
        let kept_p = by_manifold.get(gi).copied().unwrap_or(0.0);
        let lost_p: f64 = by_manifold.iter().sum::<f64>() - kept_p;
        out[i] = Some(PreparedClass {
            class: classes[i],
            state: run.manifolds[gi].clone(),
            state_momentum: if kept > 0.0 { kept_p / kept } else { 0.0 },
            lost,
            lost_momentum: if lost > 1e-14 { lost_p / lost } else { 0.0 },
        });
    }
    Ok(PreparedBeam {
        theta,
        classes: out.into_iter().map(|c| c.expect("every class propagated")).collect(),
    })
}

/// Deflection parameters of one beam for every velocity class.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionSetup {
    pub mode: PolarisationMode,
    pub direction: IncidentDirection,
    /// In velocity-class order.
    pub sets: Vec<DeflectionParameterSet>,
}

pub fn deflection_setup(
    cfg: &RunConfig,
    structure: &AtomicStructure,
    mode: PolarisationMode,
    direction: &IncidentDirection,
) -> Result<DeflectionSetup, Error> {
    let classes = velocity_classes(&cfg.beamline);
    let d = &cfg.deflection;
    let (times, order) = class_times(&classes, d.interaction_length_m, structure.linewidth_per_s);
    let computed = compute_deflection_parameters_at_times(mode, direction, structure, &d.beam(0.0), &times, cfg.sigma_u)
        .map_err(|e| in_region("deflection", e))?;
    let mut sets: Vec<Option<DeflectionParameterSet>> = vec![None; classes.len()];
    for (s, &i) in computed.into_iter().zip(&order) {
        sets[i] = Some(s);
    }
    Ok(DeflectionSetup {
        mode,
        direction: direction.clone(),
        sets: sets.into_iter().map(|s| s.expect("every class computed")).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// Atoms that entered outside the reference manifold.
    Unprepared,
    /// Atoms pumped out of the reference manifold by the preparation beam.
    PreparationLoss,
    /// Atoms pumped out of the reference manifold by the deflection beam.
    DeflectionLoss,
    /// Atoms still in the reference manifold behind the deflection beam.
    Deflected,
}

impl ComponentKind {
    /// Whether the detector sees these atoms in the undeflected peak.
    pub fn in_reference_peak(self) -> bool {
        self != ComponentKind::Deflected
    }
}

/// A group of atoms with a common transverse momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileComponent {
    pub kind: ComponentKind,
    pub velocity: f64,
    /// Fraction of all atoms.
    pub weight: f64,
    /// Transverse momentum along the detector axis, ħk.
    pub momentum: f64,
    /// Detector position, ħk-equivalent.
    pub position: f64,
}

/// Detector position of an atom at `velocity` carrying `momentum` ħk.
pub fn detector_position(momentum: f64, velocity: f64, b: &BeamlineConfig) -> f64 {
    momentum * b.mean_velocity_m_per_s / velocity
}

fn dot(a: [f64; 3], b: &nalgebra::Vector3<f64>) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Split the prepared beam into detector components behind one deflection
/// beam. The deflection momenta use the sublevel model with the state
/// rotated into the beam's frame.
pub fn beam_components(
    cfg: &RunConfig,
    prepared: &PreparedBeam,
    setup: &DeflectionSetup,
) -> Result<Vec<ProfileComponent>, Error> {
    let b = &cfg.beamline;
    let axis = setup.direction.unit()?;
    let prep_axis = if b.include_preparation_recoil {
        dot([0.0, 0.0, 1.0], &axis)
    } else {
        0.0
    };
    let f_ref = b.reference_manifold_fraction;
    let mut out = Vec::with_capacity(4 * prepared.classes.len());
    for (c, dset) in prepared.classes.iter().zip(&setup.sets) {
        let v = c.class.velocity;
        let w = c.class.weight;
        let mut push = |kind, weight: f64, momentum: f64| {
            out.push(ProfileComponent {
                kind,
                velocity: v,
                weight,
                momentum,
                position: detector_position(momentum, v, b),
            })
        };
        push(ComponentKind::Unprepared, w * (1.0 - f_ref), 0.0);
        push(ComponentKind::PreparationLoss, w * f_ref * c.lost, prep_axis * c.lost_momentum);
        let kept = c.state.population_scale();
        let prep_kick = prep_axis * c.state_momentum;
        let rho_l = natural_to_laser(&c.state, &setup.direction, setup.mode)?;
        let retained = retained_population(&rho_l, dset)?;
        let p_retained = retained_momentum(&rho_l, dset)?;
        let p_total = deflected_momentum(&rho_l, dset)?;
        let lost = (1.0 - retained).max(0.0);
        let lost_mean = if lost > 1e-14 { (p_total - p_retained) / lost } else { 0.0 };
        let kept_mean = if retained > 0.0 { p_retained / retained } else { 0.0 };
        push(ComponentKind::DeflectionLoss, w * f_ref * kept * lost, prep_kick + lost_mean);
        push(ComponentKind::Deflected, w * f_ref * kept * retained, prep_kick + kept_mean);
    }
    Ok(out)
}

/// Weighted mean detector position of the components selected by `keep`.
pub fn component_centroid(components: &[ProfileComponent], keep: impl Fn(ComponentKind) -> bool) -> Option<f64> {
    let (mut w, mut x) = (0.0, 0.0);
    for c in components.iter().filter(|c| keep(c.kind)) {
        w += c.weight;
        x += c.weight * c.position;
    }
    (w > 0.0).then(|| x / w)
}

/// Counts per detector bin; `positions` are bin centres on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub positions: Vec<f64>,
    pub counts: Vec<f64>,
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<(), Error> {
        if self.positions.len() != self.counts.len() {
            return Err(Error::Config(format!(
                "profile has {} positions but {} counts",
                self.positions.len(),
                self.counts.len()
            )));
        }
        if self.positions.len() < 2 {
            return Err(Error::Config("profile needs at least two bins".into()));
        }
        if let Some(c) = self.counts.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::Config(format!("profile counts must be finite and >= 0, found {c}")));
        }
        if self.positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("profile positions must increase".into()));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        self.positions[1] - self.positions[0]
    }

    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        let h = 0.5 * self.bin_width();
        self.positions.iter().map(|x| (x - h, x + h)).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn centroid(&self) -> Option<f64> {
        let t = self.total();
        (t > 0.0).then(|| self.positions.iter().zip(&self.counts).map(|(x, n)| x * n).sum::<f64>() / t)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            positions: self.positions.clone(),
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Empty detector grid for the configured extent and bin width.
pub fn detector_grid(b: &BeamlineConfig) -> DetectorProfile {
    let n = ((b.detector_max_hbar_k - b.detector_min_hbar_k) / b.bin_width_hbar_k).floor() as usize;
    DetectorProfile {
        positions: (0..n)
            .map(|i| b.detector_min_hbar_k + (i as f64 + 0.5) * b.bin_width_hbar_k)
            .collect(),
        counts: vec![0.0; n],
    }
}

/// Expected counts from Gaussian peaks of the configured source width at
/// each component position, with Poisson noise when `rng` is given.
pub fn synthesize_profile(components: &[ProfileComponent], b: &BeamlineConfig, rng: Option<&mut ChaCha8Rng>) -> DetectorProfile {
    let mut profile = detector_grid(b);
    let edges = profile.bin_edges();
    for c in components.iter().filter(|c| c.weight > 0.0) {
        let n = b.atoms_per_profile * c.weight;
        for (count, &(lo, hi)) in profile.counts.iter_mut().zip(&edges) {
            *count += n * bin_fraction(lo, hi, c.position, b.source_width_hbar_k);
        }
    }
    if let Some(rng) = rng {
        for count in &mut profile.counts {
            if *count > 0.0 {
                *count = Poisson::new(*count).map_or(*count, |p| p.sample(rng));
            }
        }
    }
    profile
}

/// Random stream for the shot noise of one profile.
pub fn profile_rng(seed: u64, theta: f64, mode: PolarisationMode) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode_index = mode as u64;
    rng.set_stream(theta.to_bits() ^ mode_index.rotate_right(8));
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamlineRun {
    pub prepared: PreparedBeam,
    pub components: Vec<ProfileComponent>,
    pub profile: DetectorProfile,
}

fn assemble(cfg: &RunConfig, prepared: PreparedBeam, setup: &DeflectionSetup) -> Result<BeamlineRun, Error> {
    let components = beam_components(cfg, &prepared, setup)?;
    let mut rng = cfg
        .beamline
        .shot_noise
        .then(|| profile_rng(cfg.seed, prepared.theta, setup.mode));
    let profile = synthesize_profile(&components, &cfg.beamline, rng.as_mut());
    Ok(BeamlineRun {
        prepared,
        components,
        profile,
    })
}

/// Full flight path for one waveplate angle and one deflection beam.
pub fn run_beamline(
    cfg: &RunConfig,
    theta: f64,
    mode: PolarisationMode,
    direction: &IncidentDirection,
) -> Result<BeamlineRun, Error> {
    cfg.validate()?;
    let structure = cfg.structure()?;
    let setup = deflection_setup(cfg, &structure, mode, direction)?;
    let prepared = prepare_beam(cfg, &structure, theta)?;
    assemble(cfg, prepared, &setup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub theta: f64,
    /// Velocity-averaged population left in the reference manifold.
    pub reference_population: Option<f64>,
    /// Fitted peak separation per scanned mode, ħk.
    pub separations: Vec<Option<f64>>,
    /// `p(σ−) − p(σ+)` when both circular modes were scanned.
    pub p_o: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub direction: String,
    pub modes: Vec<PolarisationMode>,
    pub points: Vec<ScanPoint>,
}

impl ScanTable {
    pub fn failures(&self) -> Vec<(f64, String)> {
        self.points
            .iter()
            .flat_map(|p| p.errors.iter().map(move |e| (p.theta, e.clone())))
            .collect()
    }

    /// `(θ, P_o)` for every point where both circular fits succeeded.
    pub fn p_o_series(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter_map(|p| p.p_o.map(|v| (p.theta, v))).collect()
    }
}

/// Waveplate scan along the orientation direction. Failures of individual
/// points are recorded in the table and the scan continues.
pub fn scan_preparation(cfg: &RunConfig, modes: &[PolarisationMode], thetas: &[f64]) -> Result<ScanTable, Error> {
    cfg.validate()?;
    if thetas.is_empty() {
        return Err(Error::Config("waveplate grid is empty".into()));
    }
    if modes.is_empty() {
        return Err(Error::Config("no deflection modes to scan".into()));
    }
    let structure = cfg.structure()?;
    let direction = cfg.orientation_direction();
    let setups = modes
        .iter()
        .map(|&m| deflection_setup(cfg, &structure, m, direction))
        .collect::<Result<Vec<_>, _>>()?;
    let points = par_map(thetas, |&theta| {
        let mut errors = Vec::new();
        let prepared = match prepare_beam(cfg, &structure, theta) {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        };
        let separations: Vec<Option<f64>> = setups
            .iter()
            .map(|setup| {
                let prepared = prepared.clone()?;
                let fitted = assemble(cfg, prepared, setup)
                    .and_then(|run| fit_double_gaussian(&run.profile, None));
                match fitted {
                    Ok(f) if f.warning == Some(FitWarning::SinglePeak) => {
                        errors.push(format!("{}: only one peak resolved", setup.mode));
                        None
                    }
                    Ok(f) => Some(f.separation),
                    Err(e) => {
                        errors.push(format!("{}: {e}", setup.mode));
                        None
                    }
                }
            })
            .collect();
        let sep = |m: PolarisationMode| modes.iter().position(|x| *x == m).and_then(|i| separations[i]);
        let p_o = sep(PolarisationMode::SigmaMinus).zip(sep(PolarisationMode::SigmaPlus)).map(|(a, b)| a - b);
        ScanPoint {
            theta,
            reference_population: prepared.as_ref().map(PreparedBeam::reference_population),
            separations,
            p_o,
            errors,
        }
    });
    Ok(ScanTable {
        direction: direction.label.clone(),
        modes: modes.to_vec(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetrySource {
    Measured,
    /// Copied from `π − θ` with the sign reversed.
    Mirrored,
    /// Copied from `θ − π`.
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LPerpPoint {
    /// In `[0, 2π)`.
    pub theta: f64,
    pub l_perp: f64,
    pub source: SymmetrySource,
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if 2.0 * PI - t < 1e-12 {
        0.0
    } else {
        t
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (wrap_angle(a) - wrap_angle(b)).abs();
    d.min(2.0 * PI - d)
}

/// `L⊥2 = P_o / K_2` at each scan point, followed by the copies produced by
/// the two waveplate symmetries.
pub fn symmetrized_l_perp(series: &[(f64, f64)], k2: f64) -> Result<Vec<LPerpPoint>, Error> {
    let measured = series
        .iter()
        .map(|&(theta, p_o)| {
            Ok(LPerpPoint {
                theta: wrap_angle(theta),
                l_perp: l_perp_from_measurement(p_o, k2)?,
                source: SymmetrySource::Measured,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mirrored = measured.iter().map(|p| LPerpPoint {
        theta: wrap_angle(PI - p.theta),
        l_perp: -p.l_perp,
        source: SymmetrySource::Mirrored,
    });
    let shifted = measured.iter().map(|p| LPerpPoint {
        theta: wrap_angle(p.theta + PI),
        l_perp: p.l_perp,
        source: SymmetrySource::Shifted,
    });
    let mut out = measured.clone();
    out.extend(mirrored);
    out.extend(shifted);
    Ok(out)
}

/// Largest and mean absolute difference between each copied point and the
/// measured point at the same angle; copies without a partner are skipped.
pub fn duplicate_deviation(points: &[LPerpPoint]) -> Option<(f64, f64)> {
    let measured: Vec<&LPerpPoint> = points.iter().filter(|p| p.source == SymmetrySource::Measured).collect();
    let diffs: Vec<f64> = points
        .iter()
        .filter(|p| p.source != SymmetrySource::Measured)
        .filter_map(|p| {
            measured
                .iter()
                .find(|m| angle_gap(m.theta, p.theta) < 1e-9)
                .map(|m| (m.l_perp - p.l_perp).abs())
        })
        .collect();
    if diffs.is_empty() {
        return None;
    }
    let max = diffs.iter().cloned().fold(0.0, f64::max);
    Some((max, diffs.iter().sum::<f64>() / diffs.len() as f64))
}

/// Structure of a `P_o(θ)` scan near circular preparation that a smooth
/// waveplate curve does not explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFeature {
    /// Largest residual inside the windows at π/4 and 5π/4, ħk.
    pub amplitude: f64,
    /// `max P_o − min P_o`.
    pub scan_range: f64,
    /// `amplitude / scan_range`.
    pub relative: f64,
    /// Largest residual outside the windows, relative to the scan range.
    pub background: f64,
    pub harmonics: usize,
}

/// Fit `Σ b_k sin(2(2k−1)θ)`, `k = 1..=harmonics`, to every scan point and
/// report the largest residual within `half_width` of π/4 and 5π/4. The
/// basis has the waveplate period, the handedness antisymmetry and the
/// symmetry about π/4, so a smooth scan leaves only the truncation error.
/// A structure narrower than the highest harmonic survives the fit, reduced
/// by the leverage of the points it sits on.
pub fn loss_feature(series: &[(f64, f64)], half_width: f64, harmonics: usize) -> Result<LossFeature, Error> {
    let quarter = |theta: f64| {
        let d = (theta - PI / 4.0).rem_euclid(PI / 2.0);
        d.min(PI / 2.0 - d)
    };
    let in_feature_window = |theta: f64| {
        let d = (theta - PI / 4.0).rem_euclid(PI);
        d.min(PI - d) < half_width
    };
    let outside = series.iter().filter(|(t, _)| quarter(*t) >= half_width).count();
    if harmonics == 0 || outside < 2 * harmonics {
        return Err(Error::InsufficientMeasurements(format!(
            "{outside} scan points outside the windows for {harmonics} harmonics"
        )));
    }
    if !series.iter().any(|(t, _)| in_feature_window(*t)) {
        return Err(Error::InsufficientMeasurements("no scan point near π/4 or 5π/4".into()));
    }
    let basis = |theta: f64| nalgebra::DVector::from_fn(harmonics, |k, _| (2.0 * (2 * k + 1) as f64 * theta).sin());
    let a = nalgebra::DMatrix::from_fn(series.len(), harmonics, |i, k| basis(series[i].0)[k]);
    let y = nalgebra::DVector::from_iterator(series.len(), series.iter().map(|p| p.1));
    let coeffs = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::numerical("smooth scan model", e))?;
    let residual = |&(t, p): &(f64, f64)| (p - basis(t).dot(&coeffs)).abs();
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let scan_range = hi - lo;
    let amplitude = series
        .iter()
        .filter(|(t, _)| in_feature_window(*t))
        .map(residual)
        .fold(0.0, f64::max);
    let background = series
        .iter()
        .filter(|(t, _)| quarter(*t) >= half_width)
        .map(residual)
        .fold(0.0, f64::max);
    let rel = |x: f64| if scan_range > 0.0 { x / scan_range } else { f64::INFINITY };
    Ok(LossFeature {
        amplitude,
        scan_range,
        relative: rel(amplitude),
        background: rel(background),
        harmonics,
    })
}
