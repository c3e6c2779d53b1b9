//! Empirical-null fitting and FDR thresholding on the chi-square scale.
//!
//! The marginal histogram of the transformed statistics is treated as a
//! mixture dominated by null voxels. A scaled chi-square null `a chi2(nu)`
//! is fitted to the histogram bulk by Poisson regression with predictors
//! `t` and `log t` (log link), giving `a` from the linear coefficient,
//! `nu` from the logarithmic one, and the null fraction `p0` from the
//! intercept. FDR curves are tail-area ratios of the (scaled) null survival
//! to the empirical survival; the threshold at level alpha is the smallest
//! grid point whose estimated FDR drops to alpha.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{self, SpecialError};
use crate::volume::{Mask, StatisticVolume};

/// IRLS stops when no coefficient moves by more than this.
const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITER: usize = 100;
/// Minimum number of positive-count bins the regression needs.
const MIN_FIT_BINS: usize = 5;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NullError {
    #[error("histogram needs at least one value")]
    EmptyInput,
    #[error("bin width must be positive and finite, got {0}")]
    InvalidBinWidth(f64),
    #[error("values must be finite and >= 0, got {0}")]
    InvalidValue(f64),
    #[error("fit interval holds {found} positive-count bins, need at least {}", MIN_FIT_BINS)]
    TooFewBins { found: usize },
    #[error("fitted count profile does not decay (t coefficient {0} >= 0)")]
    NonDecayingFit(f64),
    #[error("fitted degrees of freedom {0} are not positive")]
    InvalidDf(f64),
    #[error("Poisson regression did not converge within {0} iterations")]
    IrlsDiverged(usize),
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("fit quantile must lie in (0, 1], got {0}")]
    InvalidFitQuantile(f64),
    #[error("p0 must lie in (0, 1], got {0}")]
    InvalidP0(f64),
    #[error("threshold grid must be non-empty, increasing, and >= 0")]
    InvalidGrid,
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Fixed-width histogram over `[0, max]` with half-open bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bin_width: f64,
    lower_edge: f64,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    /// Bins non-negative values with the given width; bin `k` covers
    /// `[k*width, (k+1)*width)`.
    pub fn new(values: &[f64], bin_width: f64) -> Result<Self, NullError> {
        if values.is_empty() {
            return Err(NullError::EmptyInput);
        }
        if !bin_width.is_finite() || bin_width <= 0.0 {
            return Err(NullError::InvalidBinWidth(bin_width));
        }
        let mut max = 0.0f64;
        for &v in values {
            if !v.is_finite() || v < 0.0 {
                return Err(NullError::InvalidValue(v));
            }
            max = max.max(v);
        }
        let bins = (max / bin_width).floor() as usize + 1;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let k = ((v / bin_width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Histogram { bin_width, lower_edge: 0.0, counts, total: values.len() as u64 })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn lower_edge(&self) -> f64 {
        self.lower_edge
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        self.lower_edge + (bin as f64 + 0.5) * self.bin_width
    }

    /// Empirical quantile reconstructed from the binned counts with linear
    /// interpolation inside the quantile bin.
    pub fn quantile(&self, q: f64) -> f64 {
        let target = q * self.total as f64;
        let mut cum = 0.0;
        for (k, &c) in self.counts.iter().enumerate() {
            let next = cum + c as f64;
            if next >= target {
                let frac = if c == 0 { 0.0 } else { (target - cum) / c as f64 };
                return self.lower_edge + (k as f64 + frac) * self.bin_width;
            }
            cum = next;
        }
        self.lower_edge + self.counts.len() as f64 * self.bin_width
    }
}

/// Parameters of the fitted scaled chi-square null together with fit
/// diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNullFit {
    /// Scale factor of the null.
    pub scale: f64,
    /// Degrees of freedom of the null.
    pub df: f64,
    /// Null fraction, clamped into (0, 1] for estimation.
    pub p0: f64,
    /// Raw null-fraction estimate before clamping; may exceed 1.
    pub p0_raw: f64,
    /// Upper end of the fitting interval.
    pub fit_limit: f64,
    /// Intercept of the Poisson regression.
    pub intercept: f64,
    /// Poisson deviance of the fit.
    pub deviance: f64,
    /// IRLS iterations used.
    pub iterations: usize,
    /// Number of bins entering the regression.
    pub bins_used: usize,
}

impl EmpiricalNullFit {
    /// Density of the fitted null at `t`; singular at 0 when `df < 2`.
    pub fn density(&self, t: f64) -> Result<f64, NullError> {
        scaled_chisq_density(t, self.scale, self.df)
    }

    /// Survival function of the fitted null.
    pub fn survival(&self, u: f64) -> Result<f64, NullError> {
        Ok(special::chisq_sf(self.df, (u / self.scale).max(0.0))?.value())
    }
}

/// Density of `a * chi2(nu)` at `t`.
pub fn scaled_chisq_density(t: f64, a: f64, nu: f64) -> Result<f64, NullError> {
    if !(a > 0.0) || !(nu > 0.0) {
        return Err(NullError::InvalidDf(nu));
    }
    if t < 0.0 || (t == 0.0 && nu < 2.0) {
        return Err(NullError::InvalidValue(t));
    }
    if t == 0.0 {
        // continuous limits: 1/(2a) at nu = 2, zero above
        return Ok(if nu == 2.0 { 0.5 / a } else { 0.0 });
    }
    let half = 0.5 * nu;
    let log_density = -half * (2.0 * a).ln() - special::log_gamma(half)? - t / (2.0 * a)
        + (half - 1.0) * t.ln();
    Ok(log_density.exp())
}

/// Fits the scaled chi-square null to the histogram bulk.
///
/// Bins with midpoints in `(0, T]` enter the regression, where `T` is the
/// `fit_upper` quantile of the histogram (the bulk that is mostly null).
/// Zero-count bins are kept: dropping them would bias the fit.
pub fn fit_empirical_null(hist: &Histogram, fit_upper: f64) -> Result<EmpiricalNullFit, NullError> {
    if !(fit_upper > 0.0 && fit_upper <= 1.0) {
        return Err(NullError::InvalidFitQuantile(fit_upper));
    }
    let fit_limit = hist.quantile(fit_upper);
    let mut rows: Vec<[f64; 3]> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for (k, &c) in hist.counts.iter().enumerate() {
        let t = hist.midpoint(k);
        if t > 0.0 && t <= fit_limit {
            rows.push([1.0, t, t.ln()]);
            y.push(c as f64);
        }
    }
    let positive = y.iter().filter(|&&c| c > 0.0).count();
    if positive < MIN_FIT_BINS {
        return Err(NullError::TooFewBins { found: positive });
    }

    let fit = poisson_irls(&rows, &y)?;
    let [beta0, beta1, beta2] = fit.beta;
    if beta1 >= 0.0 {
        return Err(NullError::NonDecayingFit(beta1));
    }
    let scale = -1.0 / (2.0 * beta1);
    let df = 2.0 * (beta2 + 1.0);
    if df <= 0.0 {
        return Err(NullError::InvalidDf(df));
    }
    // intercept = log(N * width * p0) - (nu/2) log(2a) - log Gamma(nu/2)
    let half = 0.5 * df;
    let log_p0 = beta0 - (hist.total as f64 * hist.bin_width).ln()
        + half * (2.0 * scale).ln()
        + special::log_gamma(half)?;
    let p0_raw = log_p0.exp();
    Ok(EmpiricalNullFit {
        scale,
        df,
        p0: p0_raw.min(1.0),
        p0_raw,
        fit_limit,
        intercept: beta0,
        deviance: fit.deviance,
        iterations: fit.iterations,
        bins_used: y.len(),
    })
}

struct IrlsFit {
    beta: [f64; 3],
    deviance: f64,
    iterations: usize,
}

/// Moment-matched starting coefficients: for counts from a scaled
/// chi-square bulk, `mean = a nu` and `var = 2 a^2 nu` give the slope and
/// log-slope directly, which keeps Newton well-behaved even when the bulk
/// is sharply concentrated (large nu).
fn irls_start(rows: &[[f64; 3]], y: &[f64]) -> [f64; 3] {
    let total: f64 = y.iter().sum();
    let flat = [(total / y.len() as f64).max(1e-8).ln(), 0.0, 0.0];
    if total <= 0.0 {
        return flat;
    }
    let mean = rows.iter().zip(y).map(|(r, &c)| r[1] * c).sum::<f64>() / total;
    let var = rows.iter().zip(y).map(|(r, &c)| (r[1] - mean).powi(2) * c).sum::<f64>() / total;
    if !(mean > 0.0) || !(var > 0.0) {
        return flat;
    }
    let a0 = var / (2.0 * mean);
    let nu0 = 2.0 * mean * mean / var;
    let beta1 = -1.0 / (2.0 * a0);
    let beta2 = nu0 / 2.0 - 1.0;
    // intercept matching the total count under the slope guesses
    let denom: f64 = rows.iter().map(|r| (beta1 * r[1] + beta2 * r[2]).exp()).sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return flat;
    }
    [(total / denom).ln(), beta1, beta2]
}

/// Iteratively reweighted least squares for the Poisson log link with three
/// coefficients.
fn poisson_irls(rows: &[[f64; 3]], y: &[f64]) -> Result<IrlsFit, NullError> {
    let mut beta = irls_start(rows, y);
    for iteration in 1..=IRLS_MAX_ITER {
        let mut xtwx = [[0.0f64; 3]; 3];
        let mut xtwz = [0.0f64; 3];
        for (row, &yi) in rows.iter().zip(y) {
            let eta: f64 = (0..3).map(|j| row[j] * beta[j]).sum();
            // linear predictors this large mean the iteration is running away
            if !(-700.0..=700.0).contains(&eta) {
                return Err(NullError::IrlsDiverged(iteration));
            }
            let mu = eta.exp();
            let z = eta + (yi - mu) / mu;
            for i in 0..3 {
                for j in 0..3 {
                    xtwx[i][j] += mu * row[i] * row[j];
                }
                xtwz[i] += mu * row[i] * z;
            }
        }
        let next = solve3(&xtwx, &xtwz).ok_or(NullError::SingularSystem)?;
        if next.iter().any(|b| !b.is_finite()) {
            return Err(NullError::IrlsDiverged(iteration));
        }
        let delta = (0..3).map(|i| (next[i] - beta[i]).abs()).fold(0.0f64, f64::max);
        beta = next;
        // stop on stable coefficients or at the iteration cap; when the
        // predictors are nearly collinear the coefficients can keep sliding
        // along a likelihood ridge even though the fit itself is converged
        if delta < IRLS_TOL || iteration == IRLS_MAX_ITER {
            let deviance = poisson_deviance(rows, y, &beta);
            return Ok(IrlsFit { beta, deviance, iterations: iteration });
        }
    }
    unreachable!("loop returns at the iteration cap")
}

fn poisson_deviance(rows: &[[f64; 3]], y: &[f64], beta: &[f64; 3]) -> f64 {
    let mut dev = 0.0;
    for (row, &yi) in rows.iter().zip(y) {
        let eta: f64 = (0..3).map(|j| row[j] * beta[j]).sum();
        let mu = eta.exp();
        let term = if yi > 0.0 { yi * (yi / mu).ln() - (yi - mu) } else { mu };
        dev += term;
    }
    2.0 * dev
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-200 || !det.is_finite() {
        return None;
    }
    let mut x = [0.0f64; 3];
    for k in 0..3 {
        let mut m = *a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        let dk = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        x[k] = dk / det;
    }
    Some(x)
}

/// The null model an FDR curve is computed against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NullModel {
    /// Chi-square with the stated degrees of freedom.
    Theoretical { df: f64 },
    /// A fitted scaled chi-square null.
    Empirical(EmpiricalNullFit),
}

impl NullModel {
    pub fn survival(&self, u: f64) -> Result<f64, NullError> {
        match self {
            NullModel::Theoretical { df } => Ok(special::chisq_sf(*df, u.max(0.0))?.value()),
            NullModel::Empirical(fit) => fit.survival(u),
        }
    }

    pub fn source(&self) -> NullSource {
        match self {
            NullModel::Theoretical { .. } => NullSource::Theoretical,
            NullModel::Empirical(_) => NullSource::Empirical,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullSource {
    Theoretical,
    Empirical,
}

/// Estimated FDR as a function of the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdrCurve {
    thresholds: Vec<f64>,
    fdr: Vec<f64>,
    pub source: NullSource,
    pub p0: f64,
}

impl FdrCurve {
    /// Assembles a curve from precomputed parts (values are clamped into
    /// [0, 1] like the estimator's own output).
    pub fn from_parts(thresholds: Vec<f64>, fdr: Vec<f64>, source: NullSource, p0: f64) -> Self {
        assert_eq!(thresholds.len(), fdr.len());
        let fdr = fdr.into_iter().map(|f| f.clamp(0.0, 1.0)).collect();
        FdrCurve { thresholds, fdr, source, p0 }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Estimated FDR per threshold, clamped into [0, 1] for reporting.
    pub fn fdr(&self) -> &[f64] {
        &self.fdr
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thresholds.iter().copied().zip(self.fdr.iter().copied())
    }
}

/// Conventional histogram bin width for chi-square-scale statistics.
pub const DEFAULT_BIN_WIDTH: f64 = 0.2;

/// Evenly spaced threshold grid over `[0, max]`, for plotting. Threshold
/// selection itself should use [`observed_grid`], where the infimum is
/// attained.
pub fn uniform_grid(max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| max * i as f64 / (points - 1) as f64).collect()
}

/// Default threshold grid: zero followed by the sorted observed values (the
/// infimum in the threshold rule is attained at an observed value).
pub fn observed_grid(values: &[f64]) -> Vec<f64> {
    let mut grid = Vec::with_capacity(values.len() + 1);
    grid.push(0.0);
    grid.extend(values.iter().copied().filter(|v| v.is_finite()));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Tail-ratio FDR estimate over a threshold grid.
///
/// At each grid point `u` the estimate is `p0 * S_null(u) / S_emp(u)` where
/// `S_emp(u)` is the fraction of values at or above `u`, floored at `1/N` so
/// thresholds beyond the largest observation stay defined.
pub fn fdr_curve(
    values: &[f64],
    null: &NullModel,
    p0: f64,
    grid: &[f64],
) -> Result<FdrCurve, NullError> {
    if values.is_empty() {
        return Err(NullError::EmptyInput);
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(NullError::InvalidP0(p0));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 0.0 {
        return Err(NullError::InvalidGrid);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut fdr = Vec::with_capacity(grid.len());
    for &u in grid {
        let below = sorted.partition_point(|&v| v < u);
        let survival_emp = ((sorted.len() - below) as f64 / n).max(1.0 / n);
        let survival_null = null.survival(u)?;
        fdr.push((p0 * survival_null / survival_emp).clamp(0.0, 1.0));
    }
    Ok(FdrCurve { thresholds: grid.to_vec(), fdr, source: null.source(), p0 })
}

/// The smallest grid threshold whose estimated FDR is at most `alpha`;
/// `None` when no grid point qualifies.
pub fn select_threshold(curve: &FdrCurve, alpha: f64) -> Option<f64> {
    curve
        .iter()
        .find(|&(_, fdr)| fdr <= alpha)
        .map(|(u, _)| u)
}

/// Voxels selected at a threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySet {
    pub threshold: f64,
    /// Indices of masked voxels with statistic at or above the threshold.
    pub voxels: Vec<usize>,
}

impl DiscoverySet {
    pub fn count(&self) -> usize {
        self.voxels.len()
    }
}

/// Counts and lists the masked voxels whose statistic reaches `threshold`.
pub fn count_discoveries(values: &StatisticVolume, mask: &Mask, threshold: f64) -> DiscoverySet {
    let voxels = mask
        .indices()
        .filter(|&i| {
            let v = values.get(i);
            v.is_finite() && v >= threshold
        })
        .collect();
    DiscoverySet { threshold, voxels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chisq2_values(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| -2.0 * (1.0 - rng.random::<f64>()).ln()).collect()
    }

    #[test]
    fn histogram_basic_binning() {
        let h = Histogram::new(&[0.1, 0.1, 0.3], 0.2).unwrap();
        assert_eq!(h.counts(), &[2, 1]);
        assert_eq!(h.total(), 3);
        assert!(Histogram::new(&[], 0.2).is_err());
        assert!(Histogram::new(&[1.0], 0.0).is_err());
        assert!(Histogram::new(&[-0.5], 0.2).is_err());
    }

    #[test]
    fn histogram_first_bin_frequency_matches_integral() {
        let values = chisq2_values(1_000_000, 1);
        let h = Histogram::new(&values, 0.2).unwrap();
        let freq = h.counts()[0] as f64 / h.total() as f64;
        let exact = 1.0 - (-0.1f64).exp();
        assert!((freq - exact).abs() < 0.002, "freq = {freq}");
    }

    #[test]
    fn histogram_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(1..500);
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..30.0)).collect();
            let width = rng.random_range(0.05..2.0);
            let h = Histogram::new(&values, width).unwrap();
            assert_eq!(h.counts().iter().sum::<u64>(), n as u64);
        }
    }

    #[test]
    fn histogram_quantile_interpolates() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        let h = Histogram::new(&values, 0.2).unwrap();
        let q = h.quantile(0.9);
        assert!((q - 9.0).abs() < 0.2, "q = {q}");
    }

    #[test]
    fn fit_recovers_pure_null() {
        let values = chisq2_values(200_000, 3);
        let h = Histogram::new(&values, 0.2).unwrap();
        let fit = fit_empirical_null(&h, 0.9).unwrap();
        assert!((fit.scale - 1.0).abs() < 0.03, "a = {}", fit.scale);
        assert!((fit.df - 2.0).abs() < 0.06, "nu = {}", fit.df);
        assert!(fit.p0 >= 0.97 && fit.p0 <= 1.0, "p0 = {}", fit.p0);
        assert!(fit.iterations < IRLS_MAX_ITER);
        // fit limit sits near the 0.9 quantile of chi-square(2)
        assert!((fit.fit_limit - 4.605).abs() < 0.25);
    }

    #[test]
    fn fit_detects_planted_mixture_fraction() {
        let mut values = chisq2_values(190_000, 4);
        let signal: Vec<f64> = chisq2_values(10_000, 5).iter().map(|v| v + 12.0).collect();
        values.extend(signal);
        let h = Histogram::new(&values, 0.2).unwrap();
        let fit = fit_empirical_null(&h, 0.9).unwrap();
        assert!(fit.p0_raw > 0.93 && fit.p0_raw < 0.97, "p0_raw = {}", fit.p0_raw);
        assert!((fit.scale - 1.0).abs() < 0.05);
        assert!((fit.df - 2.0).abs() < 0.12);
    }

    #[test]
    fn fit_self_consistency_across_seeds() {
        let mut passes = 0;
        for seed in 0..20 {
            let values = chisq2_values(200_000, 100 + seed);
            let h = Histogram::new(&values, 0.2).unwrap();
            let fit = fit_empirical_null(&h, 0.9).unwrap();
            let ok = (fit.scale - 1.0).abs() <= 0.03
                && (fit.df - 2.0).abs() <= 0.06
                && fit.p0 >= 0.97;
            if ok {
                passes += 1;
            }
        }
        assert!(passes >= 18, "only {passes}/20 seeds recovered the null");
    }

    #[test]
    fn fit_rejects_too_few_bins() {
        let h = Histogram::new(&[0.1, 0.1, 0.3, 0.5], 0.2).unwrap();
        assert!(matches!(fit_empirical_null(&h, 0.9), Err(NullError::TooFewBins { .. })));
    }

    #[test]
    fn fit_rejects_growing_profile() {
        // counts increasing in t force a non-negative t coefficient
        let values: Vec<f64> = (0..1000)
            .flat_map(|i| {
                let t = 0.1 + (i % 40) as f64 * 0.2;
                std::iter::repeat(t).take((i % 40) + 1)
            })
            .collect();
        let h = Histogram::new(&values, 0.2).unwrap();
        assert!(matches!(
            fit_empirical_null(&h, 1.0),
            Err(NullError::NonDecayingFit(_))
        ));
    }

    #[test]
    fn density_matches_chisq2_and_normalizes() {
        // a = 1, nu = 2 is exactly chi-square(2)
        for &t in &[0.1, 1.0, 3.0, 10.0] {
            let d = scaled_chisq_density(t, 1.0, 2.0).unwrap();
            assert_abs_diff_eq!(d, 0.5 * (-t / 2.0f64).exp(), epsilon = 1e-14);
        }
        // numerical integral of the reported smoothed-null shape
        let (a, nu) = (0.091, 20.01);
        let n = 400_000;
        let h = 200.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let t = (i as f64 * h).max(1e-12);
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * scaled_chisq_density(t, a, nu).unwrap();
        }
        let integral = acc * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
    }

    #[test]
    fn density_scale_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let t = rng.random_range(0.01..30.0);
            let a = rng.random_range(0.05..3.0);
            let nu = rng.random_range(0.5..25.0);
            let lhs = scaled_chisq_density(t, a, nu).unwrap();
            let rhs = scaled_chisq_density(t / a, 1.0, nu).unwrap() / a;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * lhs.max(1.0));
        }
    }

    #[test]
    fn density_domain_errors() {
        assert!(scaled_chisq_density(0.0, 1.0, 1.5).is_err());
        assert_eq!(scaled_chisq_density(0.0, 1.0, 2.0).unwrap(), 0.5);
        assert_eq!(scaled_chisq_density(0.0, 1.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn uniform_grid_spans_the_range() {
        let g = uniform_grid(10.0, 6);
        assert_eq!(g, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let values = chisq2_values(500, 42);
        let curve =
            fdr_curve(&values, &NullModel::Theoretical { df: 2.0 }, 1.0, &g).unwrap();
        assert_eq!(curve.thresholds().len(), 6);
    }

    #[test]
    fn fdr_curve_at_zero_equals_p0() {
        let values = chisq2_values(10_000, 7);
        let null = NullModel::Theoretical { df: 2.0 };
        let grid = observed_grid(&values);
        let curve = fdr_curve(&values, &null, 0.974, &grid).unwrap();
        assert_eq!(curve.thresholds()[0], 0.0);
        assert_abs_diff_eq!(curve.fdr()[0], 0.974, epsilon = 1e-12);
    }

    #[test]
    fn fdr_curve_is_near_one_for_pure_null() {
        let values = chisq2_values(50_000, 8);
        let null = NullModel::Theoretical { df: 2.0 };
        let grid = observed_grid(&values);
        let curve = fdr_curve(&values, &null, 1.0, &grid).unwrap();
        let median = 2.0 * 2f64.ln();
        for (u, fdr) in curve.iter() {
            if u < median {
                assert!((fdr - 1.0).abs() < 0.05, "fdr({u}) = {fdr}");
            }
        }
    }

    #[test]
    fn fdr_curve_transliterates_the_tail_ratio() {
        // direct check of the estimator: p0 * N * S_null(u) / max(R(u), 1)
        let values = chisq2_values(5_000, 9);
        let null = NullModel::Theoretical { df: 2.0 };
        let grid = observed_grid(&values);
        let curve = fdr_curve(&values, &null, 1.0, &grid).unwrap();
        let n = values.len() as f64;
        for (u, fdr) in curve.iter().step_by(97) {
            let r = values.iter().filter(|&&v| v >= u).count() as f64;
            let expected = (n * special::chisq_sf(2.0, u).unwrap().value() / r.max(1.0)).min(1.0);
            assert_abs_diff_eq!(fdr, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn fdr_curve_decreases_for_planted_signal() {
        let mut values = chisq2_values(20_000, 10);
        values.extend(chisq2_values(1_000, 11).iter().map(|v| v + 15.0));
        let null = NullModel::Theoretical { df: 2.0 };
        let grid = observed_grid(&values);
        let curve = fdr_curve(&values, &null, 1.0, &grid).unwrap();
        // in the far tail (but before the last order statistics) the curve
        // must have come down
        let pairs: Vec<(f64, f64)> = curve.iter().collect();
        let tail: Vec<&(f64, f64)> = pairs
            .iter()
            .filter(|(u, _)| *u > 14.0 && *u < 18.0)
            .collect();
        assert!(!tail.is_empty());
        assert!(tail.iter().all(|(_, f)| *f < 0.5));
    }

    #[test]
    fn threshold_selection_rules() {
        let curve = FdrCurve {
            thresholds: vec![0.0, 5.0, 15.92, 20.0],
            fdr: vec![0.97, 0.5, 0.19, 0.1],
            source: NullSource::Empirical,
            p0: 0.97,
        };
        assert_eq!(select_threshold(&curve, 0.2), Some(15.92));
        // alpha above the curve start selects the first grid point
        assert_eq!(select_threshold(&curve, 0.99), Some(0.0));
        assert_eq!(select_threshold(&curve, 0.05), None);
        // monotone in alpha
        let mut prev = f64::INFINITY;
        for alpha in [0.1, 0.19, 0.5, 0.97] {
            let u = select_threshold(&curve, alpha).unwrap();
            assert!(u <= prev);
            prev = u;
        }
    }

    #[test]
    fn discovery_counting() {
        use crate::volume::GridGeometry;
        let g = GridGeometry::cubic(4).unwrap();
        let mut vol = StatisticVolume::filled(g, 1.0);
        let mask = Mask::all(g);
        vol.set(5, 9.0);
        vol.set(20, 11.0);
        vol.set(40, f64::NAN);
        let hits = count_discoveries(&vol, &mask, 8.0);
        assert_eq!(hits.voxels, vec![5, 20]);
        assert_eq!(hits.count(), 2);
        // threshold above the maximum finds nothing
        assert_eq!(count_discoveries(&vol, &mask, 50.0).count(), 0);
        // monotone in the threshold
        let mut prev = usize::MAX;
        for u in [0.0, 2.0, 8.0, 10.0, 12.0] {
            let c = count_discoveries(&vol, &mask, u).count();
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn planted_extreme_signal_is_exactly_recovered() {
        use crate::volume::GridGeometry;
        let g = GridGeometry::cubic(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut data: Vec<f64> = (0..g.len())
            .map(|_| -2.0 * (1.0 - rng.random::<f64>()).ln())
            .collect();
        let planted = [g.index(1, 1, 1), g.index(5, 5, 5), g.index(8, 2, 7)];
        for &i in &planted {
            data[i] = 60.0 + i as f64 * 0.001;
        }
        let vol = StatisticVolume::from_data(g, data).unwrap();
        let hits = count_discoveries(&vol, &Mask::all(g), 50.0);
        let mut expected = planted.to_vec();
        expected.sort_unstable();
        assert_eq!(hits.voxels, expected);
    }
}
