use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::par::try_par_map;
use crate::pumping::{
    propagate_to_times, propagate_with, AtomicStructure, BeamParameters, LaserField, PropagationOptions,
};
use crate::spin::{DensityMatrix, Frame, IncidentDirection, PolarisationMode};
use crate::Error;

/// Deflection parameters `D_k^{gg}(t)` of one polarisation mode.
///
/// `d_values[g + F]` is the expected recoil momentum (ħk) of an atom that
/// enters in laser-frame sublevel `g`. The same propagations also give the
/// population still in the measured manifold afterwards and the momentum
/// carried by that population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflectionParameterSet {
    pub mode: PolarisationMode,
    pub direction: String,
    pub f: u32,
    pub interaction_time: f64,
    pub d_values: Vec<f64>,
    pub retained: Vec<f64>,
    pub retained_momentum: Vec<f64>,
    pub sigma_u: f64,
}

impl DeflectionParameterSet {
    pub fn d(&self, g: i32) -> f64 {
        self.d_values[(g + self.f as i32) as usize]
    }

    pub fn with_direction(mut self, label: &str) -> Self {
        self.direction = label.to_owned();
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let dim = 2 * self.f as usize + 1;
        if self.d_values.len() != dim || self.retained.len() != dim || self.retained_momentum.len() != dim {
            return Err(Error::Parse(format!(
                "deflection set {} / {} needs {dim} entries per column",
                self.mode, self.direction
            )));
        }
        if self.d_values.iter().any(|d| !(d.is_finite() && *d >= -1e-12)) {
            return Err(Error::Parse(format!(
                "deflection set {} / {} has negative or non-finite D values",
                self.mode, self.direction
            )));
        }
        Ok(())
    }
}

fn laser_for(mode: PolarisationMode, beam: &BeamParameters, t: f64) -> Result<LaserField, Error> {
    if !(mode.is_linear() || mode.is_circular()) {
        return Err(Error::Config(format!("deflection parameters need a pure polarisation, got {mode}")));
    }
    Ok(LaserField::deflection(mode, beam.rabi_frequency, beam.detuning, t))
}

/// Run one propagation per laser-frame sublevel and collect `D_k^{gg}`.
pub fn compute_deflection_parameters(
    mode: PolarisationMode,
    direction: &IncidentDirection,
    structure: &AtomicStructure,
    beam: &BeamParameters,
    sigma_u: f64,
) -> Result<DeflectionParameterSet, Error> {
    let mut sets =
        compute_deflection_parameters_at_times(mode, direction, structure, beam, &[beam.interaction_time], sigma_u)?;
    Ok(sets.remove(0))
}

/// As [`compute_deflection_parameters`] for several interaction times from
/// one integration per sublevel; `beam.interaction_time` is ignored.
pub fn compute_deflection_parameters_at_times(
    mode: PolarisationMode,
    direction: &IncidentDirection,
    structure: &AtomicStructure,
    beam: &BeamParameters,
    times: &[f64],
    sigma_u: f64,
) -> Result<Vec<DeflectionParameterSet>, Error> {
    direction.unit()?;
    let laser = laser_for(mode, beam, 0.0)?;
    let f = structure.reference_transition[0];
    let gi = structure
        .ground_index(f)
        .ok_or_else(|| Error::Config(format!("reference ground manifold F={f} missing")))?;
    let opts = PropagationOptions {
        track_manifold_momentum: true,
        ..PropagationOptions::default()
    };
    let sublevels: Vec<i32> = (-(f as i32)..=f as i32).collect();
    let runs = try_par_map(&sublevels, |&g| {
        let rho = DensityMatrix::pure(f, g, Frame::Laser)?;
        propagate_to_times(&rho, structure, &laser, times, &opts)
    })?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| DeflectionParameterSet {
            mode,
            direction: direction.label.clone(),
            f,
            interaction_time: t,
            d_values: runs.iter().map(|r| r[k].momentum_transfer).collect(),
            retained: runs.iter().map(|r| r[k].manifolds[gi].population_scale()).collect(),
            retained_momentum: runs
                .iter()
                .map(|r| r[k].momentum_by_manifold.as_ref().map_or(0.0, |m| m[gi]))
                .collect(),
            sigma_u,
        })
        .collect())
}

/// `p_k = Σ_g D_k^{gg} ρ^L_{gg}` for a laser-frame state.
pub fn deflected_momentum(rho: &DensityMatrix, dset: &DeflectionParameterSet) -> Result<f64, Error> {
    check_laser_frame(rho, dset)?;
    Ok((-(dset.f as i32)..=dset.f as i32).map(|g| dset.d(g) * rho.population(g)).sum())
}

/// Population left in the measured manifold after deflection, per atom.
pub fn retained_population(rho: &DensityMatrix, dset: &DeflectionParameterSet) -> Result<f64, Error> {
    check_laser_frame(rho, dset)?;
    Ok((-(dset.f as i32)..=dset.f as i32)
        .map(|g| dset.retained[(g + dset.f as i32) as usize] * rho.population(g))
        .sum())
}

/// Momentum carried by atoms that stay in the measured manifold, per atom.
pub fn retained_momentum(rho: &DensityMatrix, dset: &DeflectionParameterSet) -> Result<f64, Error> {
    check_laser_frame(rho, dset)?;
    Ok((-(dset.f as i32)..=dset.f as i32)
        .map(|g| dset.retained_momentum[(g + dset.f as i32) as usize] * rho.population(g))
        .sum())
}

fn check_laser_frame(rho: &DensityMatrix, dset: &DeflectionParameterSet) -> Result<(), Error> {
    if rho.frame() != Frame::Laser {
        return Err(crate::spin::SpinError::FrameMismatch {
            expected: Frame::Laser,
            found: rho.frame(),
        }
        .into());
    }
    if rho.f() != dset.f {
        return Err(Error::Config(format!(
            "state has F={}, deflection parameters were computed for F={}",
            rho.f(),
            dset.f
        )));
    }
    Ok(())
}

/// Momentum from the sublevel sum next to a direct propagation of the
/// whole state, which also sees laser-frame coherences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumComparison {
    pub linear_model: f64,
    pub full_propagation: f64,
}

impl MomentumComparison {
    pub fn deviation(&self) -> f64 {
        self.full_propagation - self.linear_model
    }
}

pub fn compare_with_propagation(
    rho: &DensityMatrix,
    dset: &DeflectionParameterSet,
    structure: &AtomicStructure,
    beam: &BeamParameters,
) -> Result<MomentumComparison, Error> {
    let linear_model = deflected_momentum(rho, dset)?;
    let laser = laser_for(dset.mode, beam, dset.interaction_time)?;
    let full = propagate_with(rho, structure, &laser, &PropagationOptions::default())?;
    Ok(MomentumComparison {
        linear_model,
        full_propagation: full.momentum_transfer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ModeClass {
    Linear,
    SigmaPlus,
    SigmaMinus,
}

fn mode_class(mode: PolarisationMode) -> ModeClass {
    match mode {
        PolarisationMode::SigmaPlus => ModeClass::SigmaPlus,
        PolarisationMode::SigmaMinus => ModeClass::SigmaMinus,
        _ => ModeClass::Linear,
    }
}

/// Process-wide memo of deflection parameters.
///
/// In its own laser frame every linear mode is the same physical problem, and
/// the incidence direction only relabels the result, so entries are shared
/// across the four linear modes and across directions.
#[derive(Debug, Default)]
pub struct DParamCache {
    entries: RwLock<HashMap<(ModeClass, String), Arc<DeflectionParameterSet>>>,
    misses: std::sync::atomic::AtomicUsize,
}

impl DParamCache {
    pub fn global() -> &'static DParamCache {
        static CACHE: OnceLock<DParamCache> = OnceLock::new();
        CACHE.get_or_init(DParamCache::default)
    }

    /// Number of computations performed so far.
    pub fn misses(&self) -> usize {
        self.misses.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn get_or_compute(
        &self,
        mode: PolarisationMode,
        direction: &IncidentDirection,
        structure: &AtomicStructure,
        beam: &BeamParameters,
        sigma_u: f64,
    ) -> Result<DeflectionParameterSet, Error> {
        let key_body = serde_json::to_string(&(structure, beam, sigma_u.to_bits()))
            .map_err(|e| Error::Config(e.to_string()))?;
        let key = (mode_class(mode), key_body);
        if let Some(hit) = self.entries.read().expect("cache lock poisoned").get(&key) {
            let mut set = (**hit).clone();
            set.mode = mode;
            return Ok(set.with_direction(&direction.label));
        }
        let set = compute_deflection_parameters(mode, direction, structure, beam, sigma_u)?;
        self.misses.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key, Arc::new(set.clone()));
        Ok(set)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DRow {
    mode: String,
    direction: String,
    g: i32,
    d_value: f64,
    retained: f64,
    retained_momentum: f64,
    interaction_time: f64,
    sigma_u: f64,
    config_hash: String,
}

/// Write deflection sets as CSV: one row per (mode, direction, g).
pub fn write_dparams<W: Write>(sets: &[DeflectionParameterSet], config_hash: &str, mut out: W) -> Result<(), Error> {
    writeln!(out, "# tool_version: {}", crate::config::TOOL_VERSION)?;
    let mut w = csv::Writer::from_writer(out);
    for s in sets {
        let f = s.f as i32;
        for g in -f..=f {
            let k = (g + f) as usize;
            w.serialize(DRow {
                mode: s.mode.label().to_owned(),
                direction: s.direction.clone(),
                g,
                d_value: s.d_values[k],
                retained: s.retained[k],
                retained_momentum: s.retained_momentum[k],
                interaction_time: s.interaction_time,
                sigma_u: s.sigma_u,
                config_hash: config_hash.to_owned(),
            })
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read sets written by [`write_dparams`]; returns them with the config hash
/// found in the file (rows must agree on it).
pub fn read_dparams<R: Read>(input: R) -> Result<(Vec<DeflectionParameterSet>, String), Error> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut groups: Vec<(PolarisationMode, String, Vec<DRow>)> = Vec::new();
    let mut hash: Option<String> = None;
    for row in r.deserialize::<DRow>() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        if *hash.get_or_insert_with(|| row.config_hash.clone()) != row.config_hash {
            return Err(Error::Parse("rows disagree on config_hash".into()));
        }
        let mode: PolarisationMode = row.mode.parse().map_err(Error::Parse)?;
        match groups.iter_mut().find(|(m, d, _)| *m == mode && *d == row.direction) {
            Some((_, _, rows)) => rows.push(row),
            None => groups.push((mode, row.direction.clone(), vec![row])),
        }
    }
    let mut sets = Vec::with_capacity(groups.len());
    for (mode, direction, mut rows) in groups {
        rows.sort_by_key(|r| r.g);
        let f = (rows.len() as i32 - 1) / 2;
        if rows.len() % 2 != 1 || rows.iter().enumerate().any(|(k, r)| r.g != k as i32 - f) {
            return Err(Error::Parse(format!("rows for {mode}/{direction} do not cover g = -F..F exactly once")));
        }
        let set = DeflectionParameterSet {
            mode,
            direction,
            f: f as u32,
            interaction_time: rows[0].interaction_time,
            d_values: rows.iter().map(|r| r.d_value).collect(),
            retained: rows.iter().map(|r| r.retained).collect(),
            retained_momentum: rows.iter().map(|r| r.retained_momentum).collect(),
            sigma_u: rows[0].sigma_u,
        };
        set.validate()?;
        sets.push(set);
    }
    Ok((sets, hash.unwrap_or_default()))
}
