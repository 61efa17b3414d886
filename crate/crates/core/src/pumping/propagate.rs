use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::integrator::{DormandPrince, IntegratorOptions};
use super::{build_generator, AtomicStructure, Generator, LaserField};
use crate::spin::{DensityMatrix, Frame};
use crate::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PropagationOptions {
    pub integrator: IntegratorOptions,
    /// Diagonalise the full state after every accepted step and record the
    /// worst eigenvalue and Hermiticity error. Costly; meant for tests.
    pub check_physicality: bool,
    /// Also integrate the photon-number-weighted state, which splits the
    /// momentum transfer by the ground manifold the atom ends up in.
    pub track_manifold_momentum: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PropagationDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest deviation of the total trace from its initial value.
    pub max_trace_error: f64,
    pub min_eigenvalue: Option<f64>,
    pub max_hermiticity_error: Option<f64>,
}

/// State of the atom after an interaction region and the subsequent
/// field-free decay of any remaining excited population.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpingResult {
    /// One density matrix per ground manifold, in structure order; the
    /// manifold population is its `population_scale`. Empty manifolds are
    /// reported as maximally mixed with zero population.
    pub manifolds: Vec<DensityMatrix>,
    /// Excited population when the atom leaves the beam.
    pub excited_at_exit: f64,
    /// Photons emitted while inside the beam.
    pub photons_during_interaction: f64,
    /// All photons scattered, including the decay after exit.
    pub scattered_photons: f64,
    /// Momentum along the propagation direction in ħk.
    pub momentum_transfer: f64,
    /// Momentum carried by atoms ending in each ground manifold (structure
    /// order); present when requested in the options. Sums to
    /// `momentum_transfer`.
    pub momentum_by_manifold: Option<Vec<f64>>,
    pub diagnostics: PropagationDiagnostics,
}

impl PumpingResult {
    pub fn manifold(&self, f: u32) -> Option<&DensityMatrix> {
        self.manifolds.iter().find(|m| m.f() == f)
    }

    pub fn population(&self, f: u32) -> f64 {
        self.manifold(f).map_or(0.0, DensityMatrix::population_scale)
    }

    pub fn total_population(&self) -> f64 {
        self.manifolds.iter().map(DensityMatrix::population_scale).sum()
    }
}

/// Propagate a ground-manifold state through `laser.interaction_time`.
pub fn propagate(rho0: &DensityMatrix, structure: &AtomicStructure, laser: &LaserField) -> Result<PumpingResult, Error> {
    propagate_with(rho0, structure, laser, &PropagationOptions::default())
}

pub fn propagate_with(
    rho0: &DensityMatrix,
    structure: &AtomicStructure,
    laser: &LaserField,
    opts: &PropagationOptions,
) -> Result<PumpingResult, Error> {
    let mut out = propagate_to_times(rho0, structure, laser, &[laser.interaction_time], opts)?;
    Ok(out.remove(0))
}

/// One integration reporting the state at several exit times (ascending),
/// as if the atom left the beam at each of them.
pub fn propagate_to_times(
    rho0: &DensityMatrix,
    structure: &AtomicStructure,
    laser: &LaserField,
    times: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<PumpingResult>, Error> {
    let gen = build_generator(structure, laser)?;
    let start = gen.ground_block(rho0.f()).ok_or_else(|| {
        Error::Config(format!("initial state F={} is not a ground manifold of the structure", rho0.f()))
    })?;
    let n = gen.dim();
    let mut full = DMatrix::<Complex64>::zeros(n, n);
    let d = rho0.dim();
    full.view_mut((start, start), (d, d)).copy_from(rho0.elements());
    propagate_matrix(&full, &gen, rho0.frame(), times, opts)
}

/// Propagate a full (ground + excited) density matrix under `gen`.
pub fn propagate_matrix(
    initial: &DMatrix<Complex64>,
    gen: &Generator,
    frame: Frame,
    times: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<PumpingResult>, Error> {
    let n = gen.dim();
    if initial.nrows() != n || initial.ncols() != n {
        return Err(Error::Config(format!(
            "initial state is {}x{}, generator acts on {n}x{n}",
            initial.nrows(),
            initial.ncols()
        )));
    }
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Config("exit times must be ascending".into()));
        }
    }
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Config(format!("exit time {t} must be finite and >= 0")));
    }

    // row-major state, optionally the photon-weighted state, then the
    // emitted-photon counter
    let track = opts.track_manifold_momentum;
    let nn = n * n;
    let len = if track { 2 * nn + 1 } else { nn + 1 };
    let mut y = vec![ZERO; len];
    for i in 0..n {
        for j in 0..n {
            y[i * n + j] = initial[(i, j)];
        }
    }
    let trace0: f64 = (0..n).map(|i| y[i * n + i].re).sum();
    let rhs = |s: &[Complex64], out: &mut [Complex64]| {
        gen.apply(&s[..nn], &mut out[..nn]);
        if track {
            gen.apply(&s[nn..2 * nn], &mut out[nn..2 * nn]);
            gen.add_jumps(&s[..nn], &mut out[nn..2 * nn]);
        }
        out[len - 1] = Complex64::new(gen.photon_rate(&s[..nn]), 0.0);
    };
    let mut stepper = DormandPrince::new(rhs, len, opts.integrator);
    let mut diag = PropagationDiagnostics::default();
    if opts.check_physicality {
        let (ev, herm) = physicality(&y[..n * n], n);
        diag.min_eigenvalue = Some(ev);
        diag.max_hermiticity_error = Some(herm);
    }

    let mut results = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &t_exit in times {
        stepper.integrate(&mut y, t, t_exit, |_, state| {
            let tr: f64 = (0..n).map(|i| state[i * n + i].re).sum();
            diag.max_trace_error = diag.max_trace_error.max((tr - trace0).abs());
            if opts.check_physicality {
                let (ev, herm) = physicality(&state[..n * n], n);
                diag.min_eigenvalue = Some(diag.min_eigenvalue.map_or(ev, |m| m.min(ev)));
                diag.max_hermiticity_error = Some(diag.max_hermiticity_error.map_or(herm, |m| m.max(herm)));
            }
            Ok(())
        })?;
        t = t_exit;
        diag.accepted_steps = stepper.stats.accepted;
        diag.rejected_steps = stepper.stats.rejected;
        results.push(settle(&y, gen, frame, track, diag)?);
    }
    Ok(results)
}

fn physicality(rho: &[Complex64], n: usize) -> (f64, f64) {
    let m = DMatrix::from_row_slice(n, n, rho);
    let herm = (&m - m.adjoint()).camax();
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let ev = SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    (ev, herm)
}

/// Let the excited population decay without light. With no drive each
/// excited coherence evolves as `exp(-(κ + iω)t)`, so the time integral of the
/// excited block is `X_{ee'} = ρ_{ee'} / (κ_{ee'} + iω_{ee'})` and the ground
/// state gains `Σ_k C_k X C_k†`.
fn settle(
    y: &[Complex64],
    gen: &Generator,
    frame: Frame,
    track: bool,
    diagnostics: PropagationDiagnostics,
) -> Result<PumpingResult, Error> {
    let n = gen.dim();
    let nn = n * n;
    let ng = gen.n_ground();
    let rates = gen.decay_rates();
    let x = decay_integral(&y[..nn], gen);
    let excited: f64 = (ng..n).map(|e| y[e * n + e].re).sum();
    let mut ground = ground_block(&y[..nn], n, ng);
    gen.add_jumps(&x, &mut ground);
    let tail_photons: f64 = (ng..n).map(|e| rates[e] * x[e * n + e].re).sum();
    let during = y[y.len() - 1].re;
    let momentum_by_manifold = track.then(|| {
        // photon-weighted ground state: its own decay plus one count for
        // every photon emitted by the ordinary state after exit
        let x1 = decay_integral(&y[nn..2 * nn], gen);
        let mut weighted = ground_block(&y[nn..2 * nn], n, ng);
        gen.add_jumps(&x1, &mut weighted);
        gen.add_jumps(&x, &mut weighted);
        gen.ground_blocks()
            .iter()
            .map(|&(f, start)| (start..start + 2 * f as usize + 1).map(|i| weighted[i * n + i].re).sum())
            .collect()
    });
    if !(during.is_finite() && excited.is_finite()) {
        return Err(Error::numerical("non-finite photon count", format!("{during}, {excited}")));
    }

    let mut manifolds = Vec::new();
    for &(f, start) in gen.ground_blocks() {
        let d = 2 * f as usize + 1;
        let block = DMatrix::from_fn(d, d, |i, j| ground[(start + i) * n + start + j]);
        let pop = block.trace().re;
        let rho = if pop > 1e-14 {
            DensityMatrix::from_unnormalised(f, &clamp_integration_noise(block), frame).map_err(|e| {
                Error::numerical(format!("ground manifold F={f} left the physical set"), e.to_string())
            })?
        } else {
            DensityMatrix::maximally_mixed(f, frame).with_population_scale(pop.max(0.0))
        };
        manifolds.push(rho);
    }
    let scattered = during + tail_photons;
    Ok(PumpingResult {
        manifolds,
        excited_at_exit: excited,
        photons_during_interaction: during,
        scattered_photons: scattered,
        momentum_transfer: scattered,
        momentum_by_manifold,
        diagnostics,
    })
}

/// Negative eigenvalues of an unnormalised block at the level of the
/// integrator's absolute tolerance are set to zero; larger ones are kept so
/// the physicality check still rejects them.
fn clamp_integration_noise(block: DMatrix<Complex64>) -> DMatrix<Complex64> {
    const NOISE: f64 = 1e-8;
    let herm = (&block + block.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 || min < -NOISE {
        return block;
    }
    let clamped = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.adjoint()
}

/// `X_{ee'} = ρ_{ee'} / (κ_{ee'} + iω_{ee'})` on the excited block, zero elsewhere.
fn decay_integral(rho: &[Complex64], gen: &Generator) -> Vec<Complex64> {
    let n = gen.dim();
    let ng = gen.n_ground();
    let rates = gen.decay_rates();
    let energies = gen.energies();
    let mut x = vec![ZERO; n * n];
    for e1 in ng..n {
        for e2 in ng..n {
            let kappa = 0.5 * (rates[e1] + rates[e2]);
            if kappa > 0.0 {
                x[e1 * n + e2] = rho[e1 * n + e2] / Complex64::new(kappa, energies[e1] - energies[e2]);
            }
        }
    }
    x
}

/// Ground-ground part of a row-major state, kept at full size.
fn ground_block(rho: &[Complex64], n: usize, ng: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..ng {
        out[i * n..i * n + ng].copy_from_slice(&rho[i * n..i * n + ng]);
    }
    out
}

/// Prepare the atoms: isotropic atoms in the reference ground manifold cross
/// the preparation beam behind a quarter-wave plate at `theta`. The natural
/// frame result holds the prepared state and the population pumped into the
/// other ground manifolds.
pub fn simulate_preparation(
    theta: f64,
    structure: &AtomicStructure,
    beam: &BeamParameters,
) -> Result<PumpingResult, Error> {
    if !theta.is_finite() {
        return Err(Error::Config("waveplate angle must be finite".into()));
    }
    let laser = LaserField::preparation(theta, beam.rabi_frequency, beam.detuning, beam.interaction_time);
    let rho0 = DensityMatrix::maximally_mixed(structure.reference_transition[0], Frame::Natural);
    propagate(&rho0, structure, &laser)
}

/// Intensity, tuning and duration of a laser region (rates in Γ, time in 1/Γ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamParameters {
    pub rabi_frequency: f64,
    pub detuning: f64,
    pub interaction_time: f64,
}
