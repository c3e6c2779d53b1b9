//! The bipolar Watson distribution on the sphere and its sample estimators.
//!
//! The density is `f(x; mu, kappa) = C(kappa) * exp(kappa * (mu'x)^2)` on
//! unit axes, antipodally symmetric and rotationally invariant about the
//! mean axis `mu`. This module provides the normalizing constant, the
//! concentration function `A(kappa)` and its inverse (the concentration
//! MLE), the scatter-matrix estimators of mean axis and dispersion, the log
//! density, and an exact rejection sampler.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::{AxisError, AxisSample, UnitAxis};
use crate::eigen::{self, Mat3, Vec3};
use crate::quad;

/// Relative tolerance for the quadratures behind `A(kappa)` and `C(kappa)`.
const QUAD_TOL: f64 = 1e-10;
/// Above this concentration the normalizing constant uses the asymptotic
/// form with the bracket-midpoint correction, in log domain.
const NORMALIZER_ASYMPTOTIC: f64 = 500.0;
/// Above this concentration `A(kappa)` uses its asymptotic series; the
/// integrand is then too close to a point mass for fixed-depth quadrature.
const CONCENTRATION_ASYMPTOTIC: f64 = 1e4;
/// Eigenvalue gap below which the mean axis is not identifiable.
const DEGENERACY_GAP: f64 = 1e-9;
/// Dispersion below which the concentration estimate is reported as
/// unbounded rather than solved for.
const DISPERSION_FLOOR: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum WatsonError {
    #[error("concentration parameter must be finite and >= 0, got {0}")]
    InvalidKappa(f64),
    #[error("gamma must lie in (1/3, 1) to solve for concentration, got {0}")]
    InvalidGamma(f64),
    #[error("sample is not concentrated: gamma = {0} <= 1/3 admits no concentration estimate")]
    NonConcentrated(f64),
    #[error("mean axis is not identifiable: top eigenvalues {largest} and {second} coincide within {gap:.1e}", gap = DEGENERACY_GAP)]
    DegenerateMean { largest: f64, second: f64 },
    #[error("invalid scatter matrix: {0}")]
    InvalidScatter(&'static str),
    #[error("sample size must be >= 1")]
    InvalidSampleSize,
    #[error(transparent)]
    Axis(#[from] AxisError),
}

/// The concentration function `A(kappa)`, the mean of `(mu'x)^2` under the
/// distribution. Strictly increasing from `A(0) = 1/3` toward 1.
pub fn concentration_a(kappa: f64) -> Result<f64, WatsonError> {
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(WatsonError::InvalidKappa(kappa));
    }
    if kappa == 0.0 {
        return Ok(1.0 / 3.0);
    }
    if kappa >= CONCENTRATION_ASYMPTOTIC {
        // A = 1 - 1/k - 1/(2k^2) - 5/(4k^3) + O(k^-4)
        let k = kappa;
        return Ok(1.0 - 1.0 / k - 0.5 / (k * k) - 1.25 / (k * k * k));
    }
    // Both integrands are scaled by exp(-kappa) to stay representable; the
    // common factor cancels in the ratio.
    let numer = quad::integrate(|t| t * t * (kappa * (t * t - 1.0)).exp(), 0.0, 1.0, QUAD_TOL);
    let denom = quad::integrate(|t| (kappa * (t * t - 1.0)).exp(), 0.0, 1.0, QUAD_TOL);
    Ok(numer / denom)
}

/// Solves `A(kappa) = gamma` for the concentration MLE, `1/3 < gamma < 1`.
pub fn solve_concentration(gamma: f64) -> Result<f64, WatsonError> {
    if !gamma.is_finite() || gamma >= 1.0 {
        return Err(WatsonError::InvalidGamma(gamma));
    }
    if gamma <= 1.0 / 3.0 {
        return Err(WatsonError::NonConcentrated(gamma));
    }
    let mut hi = (4.0 / (1.0 - gamma)).max(1.0);
    while concentration_a(hi)? < gamma {
        hi *= 2.0;
        if hi > 1e18 {
            break;
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if concentration_a(mid)? < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Log of the normalizing constant `C(kappa)`.
///
/// For moderate concentration this integrates the (rescaled) defining
/// integral; beyond [`NORMALIZER_ASYMPTOTIC`] it switches to the large-kappa
/// form `kappa / (pi e^kappa)` corrected by the midpoint of the exact
/// bracket on the projected integral, all in log domain so nothing
/// overflows.
pub fn log_normalizing_constant(kappa: f64) -> Result<f64, WatsonError> {
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(WatsonError::InvalidKappa(kappa));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    if kappa < NORMALIZER_ASYMPTOTIC {
        let scaled = quad::integrate(|t| (kappa * (t * t - 1.0)).exp(), 0.0, 1.0, QUAD_TOL);
        Ok(-(two_pi * scaled).ln() - kappa)
    } else {
        let (lo, hi) = projected_integral_bounds(kappa);
        let mid = 0.5 * (lo + hi);
        Ok(kappa.ln() - std::f64::consts::PI.ln() - kappa - mid.ln())
    }
}

/// Exact bounds on the tangent-plane projection integral whose limit is 1;
/// `pi C(kappa) e^kappa / kappa` is the reciprocal of this integral.
pub fn projected_integral_bounds(kappa: f64) -> (f64, f64) {
    let e = (-kappa).exp();
    (
        1.0 + (kappa - 1.0) * e,
        1.0 + 2.0 / kappa - (3.0 + 2.0 / kappa) * e,
    )
}

/// The normalizing constant itself; underflows to 0 for kappa beyond ~745.
pub fn normalizing_constant(kappa: f64) -> Result<f64, WatsonError> {
    Ok(log_normalizing_constant(kappa)?.exp())
}

/// The empirical scatter matrix `(1/n) sum x_i x_i'` of an axis sample:
/// symmetric, positive semidefinite, unit trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterMatrix {
    entries: Mat3,
}

impl ScatterMatrix {
    /// Validates symmetry (1e-12), positive semidefiniteness, and unit trace
    /// (1e-10).
    pub fn new(entries: Mat3) -> Result<Self, WatsonError> {
        for i in 0..3 {
            for j in (i + 1)..3 {
                if (entries[i][j] - entries[j][i]).abs() > 1e-12 {
                    return Err(WatsonError::InvalidScatter("matrix is not symmetric"));
                }
            }
        }
        let trace = entries[0][0] + entries[1][1] + entries[2][2];
        if (trace - 1.0).abs() > 1e-10 {
            return Err(WatsonError::InvalidScatter("trace differs from 1"));
        }
        let eig = eigen::eigen_sym3(&entries);
        if eig.values[2] < -1e-9 {
            return Err(WatsonError::InvalidScatter("matrix is not positive semidefinite"));
        }
        Ok(ScatterMatrix { entries })
    }

    pub fn from_sample(sample: &AxisSample) -> Self {
        let mut m = [[0.0f64; 3]; 3];
        for axis in sample.iter() {
            let c = axis.components();
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += c[i] * c[j];
                }
            }
        }
        let n = sample.len() as f64;
        for row in &mut m {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        ScatterMatrix { entries: m }
    }

    /// Pooled scatter of several samples, weighted by sample size.
    pub(crate) fn pooled(parts: &[(&ScatterMatrix, usize)]) -> Self {
        let total: usize = parts.iter().map(|(_, n)| n).sum();
        let mut m = [[0.0f64; 3]; 3];
        for (s, n) in parts {
            let w = *n as f64 / total as f64;
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += w * s.entries[i][j];
                }
            }
        }
        ScatterMatrix { entries: m }
    }

    pub fn entries(&self) -> &Mat3 {
        &self.entries
    }

    /// Eigenvalues in descending order; they sum to the unit trace.
    pub fn eigenvalues(&self) -> [f64; 3] {
        eigen::eigen_sym3(&self.entries).values
    }

    /// Largest eigenvalue and the corresponding mean axis.
    ///
    /// Fails when the top eigenvalue is (numerically) multiple: the mean
    /// axis is then not identifiable and both leading eigenvalues are
    /// reported to the caller.
    pub fn principal_axis(&self) -> Result<(f64, UnitAxis), WatsonError> {
        let eig = eigen::eigen_sym3(&self.entries);
        if eig.values[0] - eig.values[1] < DEGENERACY_GAP {
            return Err(WatsonError::DegenerateMean {
                largest: eig.values[0],
                second: eig.values[1],
            });
        }
        Ok((eig.values[0], UnitAxis::from_unit(eig.vectors[0])))
    }
}

/// Concentration estimate attached to a dispersion summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConcentrationEstimate {
    /// The MLE solving `A(kappa) = gamma`.
    Finite(f64),
    /// Dispersion is (numerically) zero; the MLE is unbounded.
    Unbounded,
    /// `gamma <= 1/3`: the MLE equation has no solution.
    NonConcentrated,
    /// The mean axis is not identifiable, so neither is the concentration.
    DegenerateMean,
}

impl ConcentrationEstimate {
    pub fn finite(&self) -> Option<f64> {
        match self {
            ConcentrationEstimate::Finite(k) => Some(*k),
            _ => None,
        }
    }
}

/// Sample summaries: principal eigenvalue, dispersion, angle dispersion and
/// the concentration estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    /// Largest eigenvalue of the scatter matrix, in `[1/3, 1]` up to noise.
    pub gamma: f64,
    /// Dispersion `s = 1 - gamma`, in `[0, 2/3]`.
    pub s: f64,
    /// `arcsin(sqrt(s))` in degrees; at most 54.7356... (uniformity).
    pub angle_dispersion_deg: f64,
    pub kappa_hat: ConcentrationEstimate,
    pub n: usize,
}

/// Dispersion summary of a sample. `gamma` and `s` are always defined; the
/// concentration estimate degrades to a flag when the sample is uniform-like
/// or its mean axis is not identifiable.
pub fn dispersion(sample: &AxisSample) -> DispersionSummary {
    let scatter = ScatterMatrix::from_sample(sample);
    let eig = scatter.eigenvalues();
    let gamma = eig[0];
    let s = (1.0 - gamma).max(0.0);
    let angle_dispersion_deg = s.min(1.0).sqrt().asin().to_degrees();
    let kappa_hat = if s < DISPERSION_FLOOR {
        ConcentrationEstimate::Unbounded
    } else if gamma <= 1.0 / 3.0 {
        ConcentrationEstimate::NonConcentrated
    } else if eig[0] - eig[1] < DEGENERACY_GAP {
        ConcentrationEstimate::DegenerateMean
    } else {
        match solve_concentration(gamma) {
            Ok(k) => ConcentrationEstimate::Finite(k),
            Err(_) => ConcentrationEstimate::NonConcentrated,
        }
    };
    DispersionSummary {
        gamma,
        s,
        angle_dispersion_deg,
        kappa_hat,
        n: sample.len(),
    }
}

/// Parameters of a bipolar Watson distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WatsonParams {
    mean_axis: UnitAxis,
    kappa: f64,
    log_c: f64,
}

impl WatsonParams {
    pub fn new(mean_axis: UnitAxis, kappa: f64) -> Result<Self, WatsonError> {
        let log_c = log_normalizing_constant(kappa)?;
        Ok(WatsonParams { mean_axis, kappa, log_c })
    }

    pub fn mean_axis(&self) -> UnitAxis {
        self.mean_axis
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Log density at an axis: `log C(kappa) + kappa (mu'x)^2`.
    pub fn log_density(&self, x: &UnitAxis) -> f64 {
        let c = self.mean_axis.dot(x);
        self.log_c + self.kappa * c * c
    }

    /// Draws `n` axes with a dedicated generator seeded from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<AxisSample, WatsonError> {
        if n == 0 {
            return Err(WatsonError::InvalidSampleSize);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(n, &mut rng))
    }

    /// Draws `n` axes from a caller-provided generator.
    ///
    /// Colatitude about the mean axis comes from rejection against the
    /// uniform-hemisphere envelope: `cos(theta)` is proposed uniformly on
    /// `[0, 1)` and accepted with probability `exp(kappa (cos^2 theta - 1))`,
    /// which is exact for the target law. Longitude is uniform. The draws
    /// are rotated so the pole coincides with the mean axis, then
    /// canonicalized.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> AxisSample {
        assert!(n >= 1, "sample size must be >= 1");
        let mu = self.mean_axis.components();
        let (t1, t2) = tangent_basis(&mu);
        let mut axes = Vec::with_capacity(n);
        for _ in 0..n {
            let u = loop {
                let u: f64 = rng.random();
                let accept: f64 = rng.random();
                if accept < (self.kappa * (u * u - 1.0)).exp() {
                    break u;
                }
            };
            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let sin_theta = (1.0 - u * u).max(0.0).sqrt();
            let (x, y) = (sin_theta * phi.cos(), sin_theta * phi.sin());
            let v = [
                x * t1[0] + y * t2[0] + u * mu[0],
                x * t1[1] + y * t2[1] + u * mu[1],
                x * t1[2] + y * t2[2] + u * mu[2],
            ];
            axes.push(UnitAxis::from_unit(v));
        }
        AxisSample::new(axes).expect("n >= 1")
    }
}

/// Deterministic orthonormal basis of the plane perpendicular to `mu`.
pub(crate) fn tangent_basis(mu: &Vec3) -> (Vec3, Vec3) {
    let k = (0..3).min_by(|&a, &b| mu[a].abs().total_cmp(&mu[b].abs())).unwrap();
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let raw = eigen::cross(mu, &e);
    let t1 = eigen::scale(&raw, 1.0 / eigen::norm(&raw));
    let t2 = eigen::cross(mu, &t1);
    (t1, t2)
}
