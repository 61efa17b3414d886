use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{wigner_big_d, EulerAngles, SpinError};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Natural,
    Laser,
}

/// Density matrix of a single hyperfine manifold `F`.
///
/// Elements are indexed by ascending `m` (`index = m + F`) and carry unit
/// trace. Population that has left the manifold is tracked separately in
/// `population_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    f: u32,
    elements: DMatrix<Complex64>,
    frame: Frame,
    population_scale: f64,
}

impl DensityMatrix {
    /// Validating constructor.
    pub fn new(
        f: u32,
        elements: DMatrix<Complex64>,
        frame: Frame,
        population_scale: f64,
    ) -> Result<Self, SpinError> {
        let dim = 2 * f as usize + 1;
        if elements.nrows() != dim || elements.ncols() != dim {
            return Err(SpinError::Invariant(format!(
                "expected {dim}x{dim} elements for F={f}, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        if !(population_scale >= 0.0 && population_scale.is_finite()) {
            return Err(SpinError::Invariant(format!(
                "population_scale must be finite and >= 0, got {population_scale}"
            )));
        }
        let rho = Self {
            f,
            elements,
            frame,
            population_scale,
        };
        rho.check()?;
        Ok(rho)
    }

    /// Build from an unnormalised block: the block is Hermitised, its trace
    /// becomes `population_scale` and the elements are rescaled to unit trace.
    pub fn from_unnormalised(f: u32, block: &DMatrix<Complex64>, frame: Frame) -> Result<Self, SpinError> {
        let herm = (block + block.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = herm.trace().re;
        if !(tr > 0.0) {
            return Err(SpinError::Invariant(format!(
                "manifold F={f} carries no population (trace {tr:e})"
            )));
        }
        Self::new(f, herm / Complex64::new(tr, 0.0), frame, tr)
    }

    pub fn pure(f: u32, m: i32, frame: Frame) -> Result<Self, SpinError> {
        let dim = 2 * f as usize + 1;
        let idx = index_of(f, m)?;
        let mut el = DMatrix::zeros(dim, dim);
        el[(idx, idx)] = Complex64::new(1.0, 0.0);
        Self::new(f, el, frame, 1.0)
    }

    /// Projector onto a normalised state vector (ascending m).
    pub fn from_state_vector(f: u32, psi: &[Complex64], frame: Frame) -> Result<Self, SpinError> {
        let dim = 2 * f as usize + 1;
        if psi.len() != dim {
            return Err(SpinError::Invariant(format!(
                "state vector length {} does not match F={f}",
                psi.len()
            )));
        }
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        let el = DMatrix::from_fn(dim, dim, |i, j| psi[i] * psi[j].conj() / norm);
        Self::new(f, el, frame, 1.0)
    }

    pub fn maximally_mixed(f: u32, frame: Frame) -> Self {
        let dim = 2 * f as usize + 1;
        Self {
            f,
            elements: DMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0),
            frame,
            population_scale: 1.0,
        }
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn population_scale(&self) -> f64 {
        self.population_scale
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    /// `ρ_{m m'}`.
    pub fn get(&self, m: i32, m_prime: i32) -> Complex64 {
        let f = self.f as i32;
        assert!(m.abs() <= f && m_prime.abs() <= f, "m out of range for F={f}");
        self.elements[((m + f) as usize, (m_prime + f) as usize)]
    }

    pub fn population(&self, m: i32) -> f64 {
        self.get(m, m).re
    }

    pub fn with_population_scale(mut self, scale: f64) -> Self {
        self.population_scale = scale;
        self
    }

    pub(crate) fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn trace(&self) -> f64 {
        self.elements.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.elements - self.elements.adjoint()).camax()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.elements.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn check(&self) -> Result<(), SpinError> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(SpinError::Invariant(format!("not Hermitian (max deviation {herm:e})")));
        }
        let tr = self.elements.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(SpinError::Invariant(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(SpinError::Invariant(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Convex combination `w·self + (1-w)·other` (frames must agree).
    pub fn mix(&self, weight: f64, other: &Self) -> Result<Self, SpinError> {
        if other.frame != self.frame {
            return Err(SpinError::FrameMismatch {
                expected: self.frame,
                found: other.frame,
            });
        }
        let el = &self.elements * Complex64::new(weight, 0.0) + &other.elements * Complex64::new(1.0 - weight, 0.0);
        Self::new(self.f, el, self.frame, weight * self.population_scale + (1.0 - weight) * other.population_scale)
    }

    /// Frobenius distance between element matrices.
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.elements - &other.elements).norm()
    }
}

fn index_of(f: u32, m: i32) -> Result<usize, SpinError> {
    let fi = f as i32;
    if m.abs() > fi {
        return Err(SpinError::Invariant(format!("m = {m} outside manifold F = {f}")));
    }
    Ok((m + fi) as usize)
}

/// `ρ' = D(α, β, γ) ρ D(α, β, γ)†`; frame tag and population are kept.
pub fn rotate_density(rho: &DensityMatrix, angles: &EulerAngles) -> Result<DensityMatrix, SpinError> {
    let d = wigner_big_d(2 * rho.f, angles)?;
    let el = &d * &rho.elements * d.adjoint();
    let el = (&el + el.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(DensityMatrix {
        f: rho.f,
        elements: el,
        frame: rho.frame,
        population_scale: rho.population_scale,
    })
}
