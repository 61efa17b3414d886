//! Wigner rotation matrices.
//!
//! Angular momenta are passed as twice their value (`twice_j`) so that
//! half-integer representations share the same code path. Matrix rows and
//! columns are ordered by ascending magnetic quantum number, `m = -j + index`.
//!
//! Rotations follow the z-y-z active convention,
//! `R(α, β, γ) = Rz(α) Ry(β) Rz(γ)`, with
//! `D^j_{m'm}(α, β, γ) = e^{-i m' α} d^j_{m'm}(β) e^{-i m γ}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{factorial, EulerAngles, SpinError};

/// Largest supported `2j`.
pub const MAX_TWICE_J: u32 = 8;

/// Small Wigner matrix `d^j(β)` for `j = twice_j / 2`.
pub fn wigner_small_d(twice_j: u32, beta: f64) -> Result<DMatrix<f64>, SpinError> {
    if twice_j > MAX_TWICE_J {
        return Err(SpinError::UnsupportedMomentum { twice_j });
    }
    if !beta.is_finite() {
        return Err(SpinError::NonFinite("beta"));
    }
    let dim = twice_j as usize + 1;
    let (s, c) = (0.5 * beta).sin_cos();
    let mut d = DMatrix::zeros(dim, dim);
    for row in 0..dim {
        for col in 0..dim {
            d[(row, col)] = small_d_element(twice_j, row, col, c, s);
        }
    }
    Ok(d)
}

/// `d^j_{m'm}` from the explicit factorial sum. `row`/`col` index `m'`/`m`
/// as `m = -j + index`.
fn small_d_element(twice_j: u32, row: usize, col: usize, c: f64, s: f64) -> f64 {
    let tj = twice_j as i64;
    // j + m' and j + m are the row/col indices themselves.
    let jpm1 = row as i64;
    let jmm1 = tj - jpm1;
    let jpm = col as i64;
    let jmm = tj - jpm;
    // m' - m
    let dm = jpm1 - jpm;

    let prefactor =
        (factorial(jpm1) * factorial(jmm1) * factorial(jpm) * factorial(jmm)).sqrt();
    let s_min = 0.max(-dm);
    let s_max = jpm.min(jmm1);
    let mut sum = 0.0;
    for k in s_min..=s_max {
        let denom = factorial(jpm - k) * factorial(k) * factorial(dm + k) * factorial(jmm1 - k);
        let sign = if (dm + k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        // cos(β/2)^(2j + m - m' - 2k) sin(β/2)^(m' - m + 2k)
        let pc = (tj - dm - 2 * k) as i32;
        let ps = (dm + 2 * k) as i32;
        sum += sign * c.powi(pc) * s.powi(ps) / denom;
    }
    prefactor * sum
}

/// Full Wigner matrix `D^j(α, β, γ)`.
pub fn wigner_big_d(twice_j: u32, angles: &EulerAngles) -> Result<DMatrix<Complex64>, SpinError> {
    let d = wigner_small_d(twice_j, angles.beta)?;
    let dim = d.nrows();
    let half = twice_j as f64 / 2.0;
    Ok(DMatrix::from_fn(dim, dim, |row, col| {
        let m1 = row as f64 - half;
        let m = col as f64 - half;
        Complex64::from_polar(1.0, -(m1 * angles.alpha + m * angles.gamma)) * d[(row, col)]
    }))
}
