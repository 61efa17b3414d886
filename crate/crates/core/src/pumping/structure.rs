use serde::{Deserialize, Serialize};

use crate::spin::six_j;
use crate::Error;

/// One hyperfine manifold; energies are in units of the natural linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifold {
    pub f: u32,
    pub energy_over_gamma: f64,
}

/// Relative transition amplitude for a ground/excited manifold pair.
///
/// Amplitudes are signed: interference between excitation paths through
/// different excited manifolds depends on their relative sign. For a closed
/// level scheme `Σ_F amplitude(F, F')² = 1` for every excited `F'`, which makes
/// every excited sublevel decay at exactly one linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleFactor {
    pub ground_f: u32,
    pub excited_f: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicStructure {
    pub ground: Vec<Manifold>,
    pub excited: Vec<Manifold>,
    /// Natural linewidth Γ in s⁻¹ (angular). Internally all rates are in Γ.
    pub linewidth_per_s: f64,
    pub dipole_factors: Vec<DipoleFactor>,
    /// Laser detuning is measured from this (ground F, excited F') transition.
    pub reference_transition: [u32; 2],
    /// Couplings detuned by more than this many linewidths are not driven.
    pub coupling_cutoff_over_gamma: f64,
}

/// Signed relative hyperfine amplitude for a `J → J'` line with nuclear spin
/// `I`, all given as twice their value.
pub fn hyperfine_amplitude(tj: i64, tj_exc: i64, ti: i64, tf: i64, tf_exc: i64) -> f64 {
    let w = six_j(tj, tj_exc, 2, tf_exc, tf, ti);
    let phase_exp = (2 * tf_exc - tf + tj + 2 + ti) / 2;
    let sign = if phase_exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sign * (((tf + 1) * (tj_exc + 1)) as f64).sqrt() * w
}

impl AtomicStructure {
    /// Sodium D2 line: ground F = 1, 2 and excited F' = 0..3.
    ///
    /// Hyperfine splittings (MHz): ground 1771.626; excited F'=3→2 58.326,
    /// 2→1 34.344, 1→0 15.810; linewidth 2π × 9.795 MHz. Transition
    /// amplitudes follow from the 6j recoupling of J = 1/2 → J' = 3/2, I = 3/2.
    pub fn sodium_d2() -> Self {
        let gamma_mhz = 9.795;
        let ground = vec![
            Manifold {
                f: 1,
                energy_over_gamma: -1771.626 / gamma_mhz,
            },
            Manifold {
                f: 2,
                energy_over_gamma: 0.0,
            },
        ];
        let excited_mhz = [(0u32, -(58.326 + 34.344 + 15.810)), (1, -(58.326 + 34.344)), (2, -58.326), (3, 0.0)];
        let excited = excited_mhz
            .iter()
            .map(|&(f, e)| Manifold {
                f,
                energy_over_gamma: e / gamma_mhz,
            })
            .collect::<Vec<_>>();
        let mut dipole_factors = Vec::new();
        for g in &ground {
            for e in &excited {
                let amp = hyperfine_amplitude(1, 3, 3, 2 * g.f as i64, 2 * e.f as i64);
                if amp.abs() > 1e-12 {
                    dipole_factors.push(DipoleFactor {
                        ground_f: g.f,
                        excited_f: e.f,
                        amplitude: amp,
                    });
                }
            }
        }
        // global sign is unobservable; make the cycling amplitude positive
        let cycle_sign = dipole_factors
            .iter()
            .find(|d| d.ground_f == 2 && d.excited_f == 3)
            .map(|d| d.amplitude.signum())
            .unwrap_or(1.0);
        for d in &mut dipole_factors {
            d.amplitude *= cycle_sign;
        }
        Self {
            ground,
            excited,
            linewidth_per_s: std::f64::consts::TAU * gamma_mhz * 1e6,
            dipole_factors,
            reference_transition: [2, 3],
            coupling_cutoff_over_gamma: 50.0,
        }
    }

    /// `F = 0 → F' = 1`, a two-level system under circular light.
    pub fn two_level() -> Self {
        Self {
            ground: vec![Manifold {
                f: 0,
                energy_over_gamma: 0.0,
            }],
            excited: vec![Manifold {
                f: 1,
                energy_over_gamma: 0.0,
            }],
            linewidth_per_s: 1.0,
            dipole_factors: vec![DipoleFactor {
                ground_f: 0,
                excited_f: 1,
                amplitude: 1.0,
            }],
            reference_transition: [0, 1],
            coupling_cutoff_over_gamma: 50.0,
        }
    }

    /// Remove every coupling of `ground_f` except to `excited_f`, leaving a
    /// closed cycling transition with no route to other ground manifolds.
    pub fn with_closed_transition(&self, ground_f: u32, excited_f: u32) -> Self {
        let mut out = self.clone();
        out.dipole_factors
            .retain(|d| d.ground_f != ground_f || d.excited_f == excited_f);
        out
    }

    pub fn amplitude(&self, ground_f: u32, excited_f: u32) -> f64 {
        self.dipole_factors
            .iter()
            .find(|d| d.ground_f == ground_f && d.excited_f == excited_f)
            .map_or(0.0, |d| d.amplitude)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.ground.is_empty() || self.excited.is_empty() {
            return Err(Error::Config("structure needs at least one ground and one excited manifold".into()));
        }
        for (kind, list) in [("ground", &self.ground), ("excited", &self.excited)] {
            for m in list.iter() {
                if !m.energy_over_gamma.is_finite() {
                    return Err(Error::Config(format!("{kind} manifold F={} has a non-finite energy", m.f)));
                }
            }
            let mut fs: Vec<u32> = list.iter().map(|m| m.f).collect();
            fs.sort_unstable();
            fs.dedup();
            if fs.len() != list.len() {
                return Err(Error::Config(format!("duplicate F values among {kind} manifolds")));
            }
        }
        if !(self.linewidth_per_s > 0.0 && self.linewidth_per_s.is_finite()) {
            return Err(Error::Config("structure.linewidth_per_s must be positive".into()));
        }
        if !(self.coupling_cutoff_over_gamma > 0.0) {
            return Err(Error::Config("structure.coupling_cutoff_over_gamma must be positive".into()));
        }
        for d in &self.dipole_factors {
            if !d.amplitude.is_finite() {
                return Err(Error::Config("structure.dipole_factors amplitude must be finite".into()));
            }
            if self.ground_index(d.ground_f).is_none() || self.excited_index(d.excited_f).is_none() {
                return Err(Error::Config(format!(
                    "structure.dipole_factors references unknown pair F={} -> F'={}",
                    d.ground_f, d.excited_f
                )));
            }
        }
        let [rg, re] = self.reference_transition;
        if self.ground_index(rg).is_none() || self.excited_index(re).is_none() {
            return Err(Error::Config("structure.reference_transition names an unknown manifold".into()));
        }
        Ok(())
    }

    pub fn ground_index(&self, f: u32) -> Option<usize> {
        self.ground.iter().position(|m| m.f == f)
    }

    pub fn excited_index(&self, f: u32) -> Option<usize> {
        self.excited.iter().position(|m| m.f == f)
    }
}
