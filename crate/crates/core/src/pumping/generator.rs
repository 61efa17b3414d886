use num_complex::Complex64;

use super::{AtomicStructure, LaserField};
use crate::spin::clebsch_gordan;
use crate::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Sparse Lindblad generator in the rotating frame of the laser.
///
/// Levels are ordered ground manifolds first (in structure order), then
/// excited manifolds, each by ascending `m`. Spontaneous decay uses one jump
/// operator per polarisation component and ground manifold, so no coherence
/// between different ground manifolds is ever created.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    n_ground: usize,
    /// Start index of each ground manifold block.
    ground_blocks: Vec<(u32, usize)>,
    /// `H_eff = H - (i/2) Σ C†C`, as (row, col, value).
    h_eff: Vec<(usize, usize, Complex64)>,
    jumps: Vec<Vec<(usize, usize, f64)>>,
    /// Total decay rate of each level (zero for ground levels).
    decay_rates: Vec<f64>,
    /// Rotating-frame energy of each level.
    energies: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_ground(&self) -> usize {
        self.n_ground
    }

    pub fn decay_rates(&self) -> &[f64] {
        &self.decay_rates
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn jumps(&self) -> &[Vec<(usize, usize, f64)>] {
        &self.jumps
    }

    /// Start index of the ground manifold with angular momentum `f`.
    pub fn ground_block(&self, f: u32) -> Option<usize> {
        self.ground_blocks.iter().find(|(g, _)| *g == f).map(|&(_, s)| s)
    }

    pub fn ground_blocks(&self) -> &[(u32, usize)] {
        &self.ground_blocks
    }

    /// Scattering rate `Tr(Σ C†C ρ)` for a row-major density matrix.
    pub fn photon_rate(&self, rho: &[Complex64]) -> f64 {
        let n = self.dim;
        (self.n_ground..n).map(|e| self.decay_rates[e] * rho[e * n + e].re).sum()
    }

    /// `out = L(ρ)` for a Hermitian, row-major `ρ`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        debug_assert_eq!(rho.len(), n * n);
        out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        // A = -i H_eff ρ; the commutator part is A + A†
        for &(r, c, h) in &self.h_eff {
            let f = -I * h;
            let src = &rho[c * n..(c + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += f * s;
            }
        }
        for i in 0..n {
            for j in i..n {
                let a = out[i * n + j];
                let b = out[j * n + i];
                let s = a + b.conj();
                out[i * n + j] = s;
                out[j * n + i] = s.conj();
            }
        }
        self.add_jumps(rho, out);
    }

    /// `out += Σ_k C_k ρ C_k†`, the population returned by spontaneous emission.
    pub fn add_jumps(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for jump in &self.jumps {
            for &(g1, e1, a1) in jump {
                for &(g2, e2, a2) in jump {
                    out[g1 * n + g2] += rho[e1 * n + e2] * (a1 * a2);
                }
            }
        }
    }

    /// Dense `L(ρ)` for arbitrary (not necessarily Hermitian) ρ; slow, for tests.
    pub fn apply_general(&self, rho: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for &(r, c, h) in &self.h_eff {
            for j in 0..n {
                out[r * n + j] += -I * h * rho[c * n + j];
            }
            // ρ H_eff† contributes ρ_{i c} conj(h) to column r
            for i in 0..n {
                out[i * n + r] += I * h.conj() * rho[i * n + c];
            }
        }
        for jump in &self.jumps {
            for &(g1, e1, a1) in jump {
                for &(g2, e2, a2) in jump {
                    out[g1 * n + g2] += rho[e1 * n + e2] * (a1 * a2);
                }
            }
        }
        out
    }
}

/// Assemble the Lindblad generator for `structure` driven by `laser`.
pub fn build_generator(structure: &AtomicStructure, laser: &LaserField) -> Result<Generator, Error> {
    structure.validate()?;
    laser.validate()?;

    let mut ground_blocks = Vec::new();
    let mut offset = 0usize;
    for g in &structure.ground {
        ground_blocks.push((g.f, offset));
        offset += 2 * g.f as usize + 1;
    }
    let n_ground = offset;
    let mut excited_blocks = Vec::new();
    for e in &structure.excited {
        excited_blocks.push((e.f, offset));
        offset += 2 * e.f as usize + 1;
    }
    let dim = offset;

    let [ref_g, ref_e] = structure.reference_transition;
    let e_ref_g = structure.ground[structure.ground_index(ref_g).unwrap()].energy_over_gamma;
    let e_ref_e = structure.excited[structure.excited_index(ref_e).unwrap()].energy_over_gamma;

    // rotating frame: ground energies relative to the reference ground level,
    // excited energies relative to the reference excited level, shifted by -δ
    let mut energies = vec![0.0; dim];
    for (g, &(_, start)) in structure.ground.iter().zip(&ground_blocks) {
        for k in 0..=2 * g.f as usize {
            energies[start + k] = g.energy_over_gamma - e_ref_g;
        }
    }
    for (e, &(_, start)) in structure.excited.iter().zip(&excited_blocks) {
        for k in 0..=2 * e.f as usize {
            energies[start + k] = e.energy_over_gamma - e_ref_e - laser.detuning;
        }
    }

    let mut couplings: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut jumps: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for &(gf, gstart) in &ground_blocks {
        for q in -1i32..=1 {
            let mut jump = Vec::new();
            for &(ef, estart) in &excited_blocks {
                let amp = structure.amplitude(gf, ef);
                if amp == 0.0 {
                    continue;
                }
                let detuned = (energies[estart] - energies[gstart]).abs() > structure.coupling_cutoff_over_gamma;
                for m in -(gf as i32)..=gf as i32 {
                    let mp = m + q;
                    if mp.abs() > ef as i32 {
                        continue;
                    }
                    let cg = clebsch_gordan(2 * gf as i64, 2 * m as i64, 2, 2 * q as i64, 2 * ef as i64, 2 * mp as i64);
                    if cg == 0.0 {
                        continue;
                    }
                    let gi = gstart + (m + gf as i32) as usize;
                    let ei = estart + (mp + ef as i32) as usize;
                    jump.push((gi, ei, amp * cg));
                    let eq = laser.polarisation.component(q);
                    if !detuned && laser.rabi_frequency > 0.0 && eq.norm() > 0.0 {
                        couplings.push((ei, gi, eq * (0.5 * laser.rabi_frequency * amp * cg)));
                    }
                }
            }
            if !jump.is_empty() {
                jumps.push(jump);
            }
        }
    }

    let mut decay_rates = vec![0.0; dim];
    for jump in &jumps {
        for &(_, e, a) in jump {
            decay_rates[e] += a * a;
        }
    }
    // Σ C†C must be diagonal for the analytic decay tail
    let mut off_diag = std::collections::HashMap::new();
    for jump in &jumps {
        for &(g1, e1, a1) in jump {
            for &(g2, e2, a2) in jump {
                if g1 == g2 && e1 != e2 {
                    *off_diag.entry((e1, e2)).or_insert(0.0) += a1 * a2;
                }
            }
        }
    }
    if let Some(v) = off_diag.values().map(|v: &f64| v.abs()).reduce(f64::max) {
        if v > 1e-10 {
            return Err(Error::Config(format!(
                "dipole factors give non-diagonal decay (off-diagonal {v:e}); every excited manifold must decay independently"
            )));
        }
    }

    let mut h_eff: Vec<(usize, usize, Complex64)> = Vec::new();
    for i in 0..dim {
        let v = Complex64::new(energies[i], -0.5 * decay_rates[i]);
        if v.norm() > 0.0 {
            h_eff.push((i, i, v));
        }
    }
    for &(e, g, w) in &couplings {
        h_eff.push((e, g, w));
        h_eff.push((g, e, w.conj()));
    }
    h_eff.sort_by_key(|&(r, c, _)| (r, c));

    Ok(Generator {
        dim,
        n_ground,
        ground_blocks,
        h_eff,
        jumps,
        decay_rates,
        energies,
    })
}
