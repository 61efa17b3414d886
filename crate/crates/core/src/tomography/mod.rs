//! Reconstruction of the natural-frame F = 2 density matrix from deflection
//! momenta.
//!
//! The measurement model is linear in ρ: each (mode, direction) momentum is
//! `Σ_g D^{gg} ρ^L_{gg}` with `ρ^L` the rotated state. Only states whose
//! coherences are `ρ_{±2,∓2}` and `ρ_{±1,∓1}` are reconstructed. They are
//! described by a real 9-vector:
//!
//! | index | parameter        |
//! |-------|------------------|
//! | 0     | ρ_{2,2}          |
//! | 1     | ρ_{1,1}          |
//! | 2     | ρ_{0,0}          |
//! | 3     | ρ_{-1,-1}        |
//! | 4     | ρ_{-2,-2}        |
//! | 5     | Re ρ_{2,-2}      |
//! | 6     | Im ρ_{2,-2}      |
//! | 7     | Re ρ_{1,-1}      |
//! | 8     | Im ρ_{1,-1}      |
//!
//! The populations are not constrained to sum to one; their sum is the total
//! population, and ρ̂ is normalised by it.

mod io;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::observables::{measure_momenta, shape_from_density, DeflectionParameterSet, ShapeParameters};
use crate::spin::{laser_frame_rotation, wigner_big_d, DensityMatrix, Frame, IncidentDirection, PolarisationMode};
use crate::Error;

pub use io::{read_measurements, write_measurements, write_result, ResultDocument};

pub const N_PARAMETERS: usize = 9;

pub const PARAMETER_NAMES: [&str; N_PARAMETERS] = [
    "rho(2,2)",
    "rho(1,1)",
    "rho(0,0)",
    "rho(-1,-1)",
    "rho(-2,-2)",
    "Re rho(2,-2)",
    "Im rho(2,-2)",
    "Re rho(1,-1)",
    "Im rho(1,-1)",
];

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub mode: PolarisationMode,
    pub direction: String,
    /// Mean momentum transfer in ħk.
    pub momentum: f64,
    pub uncertainty: f64,
}

impl MeasurementRecord {
    pub fn new(mode: PolarisationMode, direction: &str, momentum: f64, uncertainty: f64) -> Self {
        Self {
            mode,
            direction: direction.to_owned(),
            momentum,
            uncertainty,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.momentum.is_finite() {
            return Err(Error::Parse(format!("{}/{}: momentum must be finite", self.mode, self.direction)));
        }
        if !(self.uncertainty >= 0.0 && self.uncertainty.is_finite()) {
            return Err(Error::Parse(format!(
                "{}/{}: uncertainty must be finite and >= 0",
                self.mode, self.direction
            )));
        }
        Ok(())
    }
}

/// Hermitian basis matrix for parameter `k` (natural frame, index m + 2).
fn basis_matrix(k: usize) -> DMatrix<Complex64> {
    let mut e = DMatrix::zeros(5, 5);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        0..=4 => e[(4 - k, 4 - k)] = one,
        5 => {
            e[(4, 0)] = one;
            e[(0, 4)] = one;
        }
        6 => {
            e[(4, 0)] = i;
            e[(0, 4)] = -i;
        }
        7 => {
            e[(3, 1)] = one;
            e[(1, 3)] = one;
        }
        8 => {
            e[(3, 1)] = i;
            e[(1, 3)] = -i;
        }
        _ => unreachable!(),
    }
    e
}

/// Parameter vector of a natural-frame state, scaled by its population.
pub fn to_parameters(rho: &DensityMatrix) -> Result<[f64; N_PARAMETERS], Error> {
    check_natural_f2(rho)?;
    let s = rho.population_scale();
    let c2 = rho.get(2, -2) * s;
    let c1 = rho.get(1, -1) * s;
    Ok([
        rho.population(2) * s,
        rho.population(1) * s,
        rho.population(0) * s,
        rho.population(-1) * s,
        rho.population(-2) * s,
        c2.re,
        c2.im,
        c1.re,
        c1.im,
    ])
}

/// Hermitian matrix described by a parameter vector (not normalised).
pub fn parameter_matrix(x: &[f64]) -> DMatrix<Complex64> {
    (0..N_PARAMETERS).fold(DMatrix::zeros(5, 5), |acc, k| acc + basis_matrix(k) * Complex64::new(x[k], 0.0))
}

/// Frobenius norm of the elements the 9-parameter model cannot represent.
pub fn outside_model_norm(rho: &DensityMatrix) -> f64 {
    let mut el = rho.elements().clone();
    for (a, b) in [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (0, 4), (4, 0), (1, 3), (3, 1)] {
        el[(a, b)] = Complex64::new(0.0, 0.0);
    }
    el.norm()
}

fn check_natural_f2(rho: &DensityMatrix) -> Result<(), Error> {
    if rho.frame() != Frame::Natural {
        return Err(crate::spin::SpinError::FrameMismatch {
            expected: Frame::Natural,
            found: rho.frame(),
        }
        .into());
    }
    if rho.f() != 2 {
        return Err(Error::Config(format!("tomography reconstructs F = 2, got F = {}", rho.f())));
    }
    Ok(())
}

fn find_set<'a>(
    dsets: &'a [DeflectionParameterSet],
    mode: PolarisationMode,
    direction: &str,
) -> Result<&'a DeflectionParameterSet, Error> {
    dsets
        .iter()
        .find(|d| d.mode == mode && d.direction == direction)
        .ok_or_else(|| Error::Config(format!("no deflection parameters for {mode} along '{direction}'")))
}

fn find_direction<'a>(directions: &'a [IncidentDirection], label: &str) -> Result<&'a IncidentDirection, Error> {
    directions
        .iter()
        .find(|d| d.label == label)
        .ok_or_else(|| Error::Config(format!("unknown incidence direction '{label}'")))
}

/// Functional `X ↦ Σ_g D^{gg} (U X U†)_{gg}` on natural-frame matrices.
fn measurement_functional(
    mode: PolarisationMode,
    direction: &IncidentDirection,
    dset: &DeflectionParameterSet,
) -> Result<impl Fn(&DMatrix<Complex64>) -> f64, Error> {
    if dset.f != 2 {
        return Err(Error::Config(format!("tomography needs F = 2 deflection parameters, got F = {}", dset.f)));
    }
    let angles = laser_frame_rotation(direction, mode)?;
    let u = wigner_big_d(4, &angles.inverse())?;
    let d: Vec<f64> = (-2..=2).map(|g| dset.d(g)).collect();
    Ok(move |x: &DMatrix<Complex64>| {
        let l = &u * x * u.adjoint();
        (0..5).map(|i| d[i] * l[(i, i)].re).sum()
    })
}

/// Rows map the 9-parameter vector to predicted momenta.
pub fn design_matrix(
    records: &[MeasurementRecord],
    directions: &[IncidentDirection],
    dsets: &[DeflectionParameterSet],
) -> Result<DMatrix<f64>, Error> {
    let basis: Vec<_> = (0..N_PARAMETERS).map(basis_matrix).collect();
    let mut a = DMatrix::zeros(records.len(), N_PARAMETERS);
    for (i, r) in records.iter().enumerate() {
        let dir = find_direction(directions, &r.direction)?;
        let f = measurement_functional(r.mode, dir, find_set(dsets, r.mode, &r.direction)?)?;
        for (k, e) in basis.iter().enumerate() {
            a[(i, k)] = f(e);
        }
    }
    Ok(a)
}

/// The same measurements acting on all 25 real parameters of a general
/// Hermitian 5×5 matrix (diagonal, then Re and Im of each upper element).
pub fn general_design_matrix(
    records: &[MeasurementRecord],
    directions: &[IncidentDirection],
    dsets: &[DeflectionParameterSet],
) -> Result<DMatrix<f64>, Error> {
    let mut basis = Vec::with_capacity(25);
    for a in 0..5 {
        let mut e = DMatrix::zeros(5, 5);
        e[(a, a)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    for a in 0..5 {
        for b in a + 1..5 {
            for z in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut e = DMatrix::zeros(5, 5);
                e[(a, b)] = z;
                e[(b, a)] = z.conj();
                basis.push(e);
            }
        }
    }
    let mut m = DMatrix::zeros(records.len(), basis.len());
    for (i, r) in records.iter().enumerate() {
        let dir = find_direction(directions, &r.direction)?;
        let f = measurement_functional(r.mode, dir, find_set(dsets, r.mode, &r.direction)?)?;
        for (k, e) in basis.iter().enumerate() {
            m[(i, k)] = f(e);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    /// Descending; padded with zeros up to the number of columns.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub condition_number: f64,
}

impl RankCertificate {
    /// `σ_k / σ_{k+1}` (1-based), infinite when `σ_{k+1}` is zero.
    pub fn gap(&self, k: usize) -> f64 {
        let a = self.singular_values.get(k - 1).copied().unwrap_or(0.0);
        let b = self.singular_values.get(k).copied().unwrap_or(0.0);
        if b == 0.0 {
            f64::INFINITY
        } else {
            a / b
        }
    }
}

pub fn rank_certificate(a: &DMatrix<f64>) -> RankCertificate {
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv.resize(a.ncols(), 0.0);
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|s| **s > RANK_TOLERANCE * max).count();
    let condition_number = if rank == a.ncols() && rank > 0 {
        max / sv[rank - 1]
    } else {
        f64::INFINITY
    };
    RankCertificate {
        singular_values: sv,
        rank,
        condition_number,
    }
}

fn describe_direction(v: &DVector<f64>) -> String {
    let mut terms: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|(_, c)| c.abs() > 0.05).collect();
    terms.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    terms
        .iter()
        .map(|(k, c)| format!("{c:+.3}·{}", PARAMETER_NAMES[*k]))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Unit-trace, positive semidefinite estimate.
    pub rho_hat: DensityMatrix,
    /// Least-squares parameters before projection.
    pub parameters: [f64; N_PARAMETERS],
    pub total_population: f64,
    /// Weighted residual of the unconstrained solution.
    pub residual_norm: f64,
    /// Weighted residual after projection (at the fitted total population).
    pub projected_residual_norm: f64,
    /// Frobenius distance between the normalised unconstrained estimate and ρ̂.
    pub projection_distance: f64,
    /// `(AᵀWA)⁻¹`; in units of the measurement variance when unweighted.
    pub parameter_covariance: DMatrix<f64>,
    pub condition_number: f64,
    pub certificate: RankCertificate,
}

/// Weighted least squares followed by projection onto the unit-trace
/// positive semidefinite matrices.
pub fn reconstruct(
    records: &[MeasurementRecord],
    directions: &[IncidentDirection],
    dsets: &[DeflectionParameterSet],
) -> Result<ReconstructionResult, Error> {
    for r in records {
        r.validate()?;
    }
    let a = design_matrix(records, directions, dsets)?;
    let weighted = records.iter().any(|r| r.uncertainty > 0.0);
    if weighted && records.iter().any(|r| r.uncertainty == 0.0) {
        return Err(Error::Parse("either all or no measurements may carry an uncertainty".into()));
    }
    let sqrt_w: Vec<f64> = records
        .iter()
        .map(|r| if weighted { 1.0 / r.uncertainty } else { 1.0 })
        .collect();
    let aw = DMatrix::from_fn(a.nrows(), a.ncols(), |i, k| a[(i, k)] * sqrt_w[i]);
    let bw = DVector::from_iterator(records.len(), records.iter().zip(&sqrt_w).map(|(r, w)| r.momentum * w));

    let certificate = rank_certificate(&aw);
    if certificate.rank < N_PARAMETERS {
        // pad so the thin SVD returns the whole parameter space
        let mut padded = DMatrix::zeros(aw.nrows().max(N_PARAMETERS), N_PARAMETERS);
        padded.view_mut((0, 0), (aw.nrows(), N_PARAMETERS)).copy_from(&aw);
        let svd = padded.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let max = certificate.singular_values[0];
        let null: Vec<String> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s <= RANK_TOLERANCE * max)
            .map(|(i, _)| describe_direction(&vt.row(i).transpose()))
            .collect();
        return Err(Error::InsufficientMeasurements(format!(
            "design matrix has rank {} < {N_PARAMETERS}; unresolved parameter directions: {}",
            certificate.rank,
            null.join("; ")
        )));
    }

    let svd = aw.clone().svd(true, true);
    let x = svd
        .solve(&bw, RANK_TOLERANCE * certificate.singular_values[0])
        .map_err(|e| Error::numerical("least-squares solve failed", e))?;
    let residual_norm = (&aw * &x - &bw).norm();
    let normal = aw.transpose() * &aw;
    let parameter_covariance = normal
        .try_inverse()
        .ok_or_else(|| Error::numerical("normal matrix is singular", format!("{certificate:?}")))?;

    let total_population: f64 = x.iter().take(5).sum();
    if !(total_population > 0.0) {
        return Err(Error::numerical(
            "reconstructed populations do not sum to a positive value",
            format!("total population {total_population:e}"),
        ));
    }
    let raw = parameter_matrix(x.as_slice()) / Complex64::new(total_population, 0.0);
    let projected = project_to_density(&raw);
    let projection_distance = (&raw - &projected).norm();
    let rho_hat = DensityMatrix::new(2, projected, Frame::Natural, total_population)?;
    let xp = DVector::from_row_slice(&to_parameters(&rho_hat)?);
    let projected_residual_norm = (&aw * &xp - &bw).norm();

    let mut parameters = [0.0; N_PARAMETERS];
    parameters.copy_from_slice(x.as_slice());
    Ok(ReconstructionResult {
        rho_hat,
        parameters,
        total_population,
        residual_norm,
        projected_residual_norm,
        projection_distance,
        parameter_covariance,
        condition_number: certificate.condition_number,
        certificate,
    })
}

/// Nearest unit-trace positive semidefinite matrix in Frobenius norm: the
/// eigenvalues are projected onto the probability simplex.
pub fn project_to_density(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let lambda = project_to_simplex(eig.eigenvalues.as_slice());
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(lambda.len(), lambda.iter().map(|l| Complex64::new(*l, 0.0))));
    let out = v * d * v.adjoint();
    (&out + out.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Euclidean projection onto `{λ ≥ 0, Σλ = 1}`.
fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let eig = SymmetricEigen::new(rho.elements().clone());
    let sq = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)));
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&sq) * v.adjoint();
    let m = &root * sigma.elements() * &root;
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let t: f64 = SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    (t * t).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedObservables {
    pub p_o: f64,
    pub p_a: Complex64,
    pub p_g: f64,
    pub shape: ShapeParameters,
}

/// Orientation, alignment and coherence parameters predicted by ρ̂ for the
/// given direction, for comparison with their direct momentum differences.
pub fn derived_observables(
    result: &ReconstructionResult,
    direction: &IncidentDirection,
    dsets: &[DeflectionParameterSet],
) -> Result<DerivedObservables, Error> {
    let own: Vec<DeflectionParameterSet> = PolarisationMode::PURE
        .iter()
        .map(|&m| find_set(dsets, m, &direction.label).cloned())
        .collect::<Result<_, _>>()?;
    let p = measure_momenta(&result.rho_hat, direction, &own)?;
    Ok(DerivedObservables {
        p_o: p.orientation(),
        p_a: p.alignment(),
        p_g: p.coherence(),
        shape: shape_from_density(&result.rho_hat)?,
    })
}

/// Noiseless records for every (direction, mode) pair.
pub fn simulate_records(
    rho: &DensityMatrix,
    directions: &[IncidentDirection],
    modes: &[PolarisationMode],
    dsets: &[DeflectionParameterSet],
) -> Result<Vec<MeasurementRecord>, Error> {
    check_natural_f2(rho)?;
    let m = rho.elements() * Complex64::new(rho.population_scale(), 0.0);
    let mut out = Vec::with_capacity(directions.len() * modes.len());
    for dir in directions {
        for &mode in modes {
            let f = measurement_functional(mode, dir, find_set(dsets, mode, &dir.label)?)?;
            out.push(MeasurementRecord::new(mode, &dir.label, f(&m), 0.0));
        }
    }
    Ok(out)
}

/// Add Gaussian noise with standard deviation `fraction` of the largest
/// momentum; the uncertainty of every record is set to that deviation.
pub fn add_noise<R: Rng + ?Sized>(records: &[MeasurementRecord], fraction: f64, rng: &mut R) -> Result<Vec<MeasurementRecord>, Error> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(Error::Config(format!("noise fraction must be finite and >= 0, got {fraction}")));
    }
    let peak = records.iter().map(|r| r.momentum.abs()).fold(0.0, f64::max);
    let sigma = fraction * peak;
    if sigma == 0.0 {
        return Ok(records.to_vec());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok(records
        .iter()
        .map(|r| MeasurementRecord {
            momentum: r.momentum + normal.sample(rng),
            uncertainty: sigma,
            ..r.clone()
        })
        .collect())
}

/// Random state inside the reconstruction model: independent mixtures on
/// the {2, −2} and {1, −1} pairs plus a population in m = 0.
pub fn random_model_state<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let block = |r: &mut R| {
        let a = nalgebra::Matrix2::from_fn(|_, _| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
        a * a.adjoint()
    };
    let b2 = block(rng);
    let b1 = block(rng);
    let mut m = DMatrix::zeros(5, 5);
    for (i, a) in [4usize, 0].iter().enumerate() {
        for (j, b) in [4usize, 0].iter().enumerate() {
            m[(*a, *b)] = b2[(i, j)];
        }
    }
    for (i, a) in [3usize, 1].iter().enumerate() {
        for (j, b) in [3usize, 1].iter().enumerate() {
            m[(*a, *b)] = b1[(i, j)];
        }
    }
    m[(2, 2)] = Complex64::new(rng.random_range(0.0..1.0), 0.0);
    DensityMatrix::from_unnormalised(2, &m, Frame::Natural)
        .expect("positive blocks")
        .with_population_scale(1.0)
}
