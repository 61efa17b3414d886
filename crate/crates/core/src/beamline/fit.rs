use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DVector, Dyn, OMatrix, Vector6, U6};
use serde::{Deserialize, Serialize};

use super::DetectorProfile;
use crate::Error;

/// One fitted peak. `area` is in counts, `width` is the Gaussian σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    pub area: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitWarning {
    /// Only one peak could be resolved; both peaks are reported at its position.
    SinglePeak,
    /// The fitted peaks are closer than their combined width.
    Overlapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleGaussianFit {
    /// Peak nearest the undeflected position, which defines zero.
    pub reference: GaussianPeak,
    pub deflected: GaussianPeak,
    /// `deflected.center - reference.center`.
    pub separation: f64,
    pub residual_norm: f64,
    pub evaluations: usize,
    pub warning: Option<FitWarning>,
}

impl DoubleGaussianFit {
    pub fn total_area(&self) -> f64 {
        match self.warning {
            Some(FitWarning::SinglePeak) => self.reference.area,
            _ => self.reference.area + self.deflected.area,
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Counts expected in `[lo, hi]` from a Gaussian of unit area.
pub fn bin_fraction(lo: f64, hi: f64, center: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return if center >= lo && center < hi { 1.0 } else { 0.0 };
    }
    normal_cdf((hi - center) / width) - normal_cdf((lo - center) / width)
}

/// Parameters: `[area, center, ln width]` for each of the two peaks.
struct Problem<'a> {
    edges: &'a [(f64, f64)],
    counts: &'a [f64],
    p: Vector6<f64>,
    npeaks: usize,
}

impl Problem<'_> {
    fn terms(&self, k: usize, lo: f64, hi: f64) -> [f64; 4] {
        let (a, c, s) = (self.p[3 * k], self.p[3 * k + 1], self.p[3 * k + 2].exp());
        let (zl, zh) = ((lo - c) / s, (hi - c) / s);
        let (pl, ph) = (normal_pdf(zl), normal_pdf(zh));
        [
            a * (normal_cdf(zh) - normal_cdf(zl)),
            normal_cdf(zh) - normal_cdf(zl),
            -a * (ph - pl) / s,
            -a * (ph * zh - pl * zl),
        ]
    }
}

impl LeastSquaresProblem<f64, Dyn, U6> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U6>;
    type ParameterStorage = Owned<f64, U6>;

    fn set_params(&mut self, x: &Vector6<f64>) {
        self.p.copy_from(x);
        if self.npeaks == 1 {
            self.p[3] = 0.0;
        }
    }

    fn params(&self) -> Vector6<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = DVector::from_iterator(
            self.counts.len(),
            self.edges.iter().zip(self.counts).map(|(&(lo, hi), &n)| {
                (0..self.npeaks).map(|k| self.terms(k, lo, hi)[0]).sum::<f64>() - n
            }),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U6>> {
        let mut j = OMatrix::<f64, Dyn, U6>::zeros(self.counts.len());
        for (i, &(lo, hi)) in self.edges.iter().enumerate() {
            for k in 0..self.npeaks {
                let t = self.terms(k, lo, hi);
                j[(i, 3 * k)] = t[1];
                j[(i, 3 * k + 1)] = t[2];
                j[(i, 3 * k + 2)] = t[3];
            }
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Local maxima of a 5-bin moving average above 5% of its maximum, largest first.
fn find_peaks(counts: &[f64]) -> Vec<usize> {
    let n = counts.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(2), (i + 3).min(n));
            counts[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let top = smooth.iter().cloned().fold(0.0, f64::max);
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || smooth[i] > smooth[i - 1];
            let right = i + 1 == n || smooth[i] >= smooth[i + 1];
            left && right && smooth[i] > 0.05 * top
        })
        .collect();
    peaks.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]));
    peaks
}

/// Least-squares fit of two bin-integrated Gaussians. The initial guess comes
/// from the two largest smoothed maxima unless `guess` is given as
/// `(center1, center2, width)`.
pub fn fit_double_gaussian(profile: &DetectorProfile, guess: Option<(f64, f64, f64)>) -> Result<DoubleGaussianFit, Error> {
    profile.validate()?;
    let edges = profile.bin_edges();
    let counts = &profile.counts;
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::Fit("profile has no counts".into()));
    }
    let h = profile.bin_width();
    let (centers, width) = match guess {
        Some((c1, c2, w)) => (vec![c1, c2], w),
        None => {
            let peaks = find_peaks(counts);
            let c: Vec<f64> = peaks.iter().take(2).map(|&i| profile.positions[i]).collect();
            if c.is_empty() {
                return Err(Error::Fit("no peak found in profile".into()));
            }
            let spread = match c.as_slice() {
                [a, b] => 0.25 * (a - b).abs(),
                _ => f64::INFINITY,
            };
            let mean = profile.positions.iter().zip(counts).map(|(x, n)| x * n).sum::<f64>() / total;
            let rms = (profile.positions.iter().zip(counts).map(|(x, n)| (x - mean).powi(2) * n).sum::<f64>()
                / total)
                .sqrt();
            (c, rms.min(spread).max(h))
        }
    };
    if !(width > 0.0) {
        return Err(Error::Fit(format!("initial width must be positive, got {width}")));
    }
    let npeaks = centers.len();
    let init = if npeaks == 2 {
        Vector6::new(0.5 * total, centers[0], width.ln(), 0.5 * total, centers[1], width.ln())
    } else {
        Vector6::new(total, centers[0], width.ln(), 0.0, centers[0], width.ln())
    };
    let problem = Problem {
        edges: &edges,
        counts,
        p: init,
        npeaks,
    };
    let (solved, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    let residual_norm = (2.0 * report.objective_function).sqrt();
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!(
            "{:?} after {} evaluations, residual norm {residual_norm:.3e}",
            report.termination, report.number_of_evaluations
        )));
    }
    let p = solved.p;
    let peak = |k: usize| GaussianPeak {
        area: p[3 * k],
        center: p[3 * k + 1],
        width: p[3 * k + 2].exp(),
    };
    if npeaks == 1 {
        let only = peak(0);
        return Ok(DoubleGaussianFit {
            reference: only,
            deflected: only,
            separation: 0.0,
            residual_norm,
            evaluations: report.number_of_evaluations,
            warning: Some(FitWarning::SinglePeak),
        });
    }
    let (a, b) = (peak(0), peak(1));
    let (reference, deflected) = if a.center.abs() <= b.center.abs() { (a, b) } else { (b, a) };
    if !(reference.area > 0.0 && deflected.area > 0.0) {
        return Err(Error::Fit(format!(
            "non-positive peak area ({:.3e}, {:.3e}), residual norm {residual_norm:.3e}",
            reference.area, deflected.area
        )));
    }
    let warning = ((deflected.center - reference.center).abs() < reference.width + deflected.width)
        .then_some(FitWarning::Overlapping);
    Ok(DoubleGaussianFit {
        reference,
        deflected,
        separation: deflected.center - reference.center,
        residual_norm,
        evaluations: report.number_of_evaluations,
        warning,
    })
}
