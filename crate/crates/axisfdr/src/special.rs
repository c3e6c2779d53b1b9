//! Scalar special functions: log-gamma, regularized incomplete gamma and
//! beta, and the chi-square / F distribution functions built on them.
//!
//! The chi-square machinery accepts real (non-integer) degrees of freedom
//! because fitted empirical nulls routinely produce them. Quantiles are
//! solved by bracketed bisection on the corresponding CDF, which is cheap at
//! these evaluation costs and immune to bad Newton starts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_ITER: usize = 400;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SpecialError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("series or continued fraction failed to converge")]
    NoConvergence,
    #[error("quantile at probability 1 is unbounded")]
    UnboundedQuantile,
}

/// A probability, guaranteed to lie in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self, SpecialError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SpecialError::Domain("probability outside [0, 1]"));
        }
        Ok(Probability(p))
    }

    /// Clamps tiny floating-point excursions outside `[0, 1]` back in.
    fn from_cdf(p: f64) -> Self {
        Probability(p.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

// Lanczos coefficients (g = 607/128, n = 15), accurate to ~1e-15 relative.
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
];

/// Natural logarithm of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64, SpecialError> {
    if !x.is_finite() || x <= 0.0 {
        return Err(SpecialError::Domain("log_gamma requires x > 0"));
    }
    if x < 0.5 {
        // reflection keeps the Lanczos sum in its accurate range
        let pi = std::f64::consts::PI;
        return Ok((pi / (pi * x).sin()).ln() - log_gamma(1.0 - x)?);
    }
    Ok(lanczos_ln_gamma(x))
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    let z = x - 1.0;
    let mut sum = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized lower incomplete gamma P(a, x) and its complement Q(a, x).
///
/// Series expansion for `x < a + 1`, Lentz continued fraction otherwise, so
/// whichever of the pair is small is computed directly.
pub fn gamma_pq(a: f64, x: f64) -> Result<(f64, f64), SpecialError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(SpecialError::Domain("incomplete gamma requires a > 0"));
    }
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("incomplete gamma requires x >= 0"));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    let log_prefactor = -x + a * x.ln() - log_gamma(a)?;
    let prefactor = log_prefactor.exp();
    if x < a + 1.0 {
        let p = gamma_series(a, x, prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = gamma_continued_fraction(a, x, prefactor)?;
        Ok((1.0 - q, q))
    }
}

fn gamma_series(a: f64, x: f64, prefactor: f64) -> Result<f64, SpecialError> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok((prefactor * sum).clamp(0.0, 1.0));
        }
    }
    Err(SpecialError::NoConvergence)
}

fn gamma_continued_fraction(a: f64, x: f64, prefactor: f64) -> Result<f64, SpecialError> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b.max(TINY);
    let mut f = d;
    for n in 1..=MAX_ITER {
        let an = -(n as f64) * (n as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok((prefactor * f).clamp(0.0, 1.0));
        }
    }
    Err(SpecialError::NoConvergence)
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction,
/// switched through the symmetry relation so the fraction always converges
/// quickly.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64, SpecialError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(SpecialError::Domain("incomplete beta requires a, b > 0"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(SpecialError::Domain("incomplete beta requires x in [0, 1]"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let log_front =
        log_gamma(a + b)? - log_gamma(a)? - log_gamma(b)? + a * x.ln() + b * (1.0 - x).ln();
    let front = log_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok((front * beta_continued_fraction(a, b, x)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - front * beta_continued_fraction(b, a, 1.0 - x)? / b).clamp(0.0, 1.0))
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64, SpecialError> {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut f = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        f *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(f);
        }
    }
    Err(SpecialError::NoConvergence)
}

fn check_df(df: f64) -> Result<(), SpecialError> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(SpecialError::Domain("degrees of freedom must be positive"));
    }
    Ok(())
}

/// Chi-square CDF with real degrees of freedom.
pub fn chisq_cdf(df: f64, x: f64) -> Result<Probability, SpecialError> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("chi-square CDF requires x >= 0"));
    }
    Ok(Probability::from_cdf(gamma_pq(df / 2.0, x / 2.0)?.0))
}

/// Chi-square survival function 1 - CDF, computed without cancellation.
pub fn chisq_sf(df: f64, x: f64) -> Result<Probability, SpecialError> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("chi-square SF requires x >= 0"));
    }
    Ok(Probability::from_cdf(gamma_pq(df / 2.0, x / 2.0)?.1))
}

/// Chi-square quantile: the x with `chisq_cdf(df, x) = p`.
pub fn chisq_quantile(df: f64, p: Probability) -> Result<f64, SpecialError> {
    check_df(df)?;
    let p = p.value();
    if p == 1.0 {
        return Err(SpecialError::UnboundedQuantile);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    invert_increasing(|x| Ok(chisq_cdf(df, x)?.value()), p, 2.0 * df.max(1.0))
}

/// Chi-square quantile expressed through the survival function: the x with
/// `chisq_sf(df, x) = q`. Accurate deep in the upper tail.
pub fn chisq_quantile_from_sf(df: f64, q: Probability) -> Result<f64, SpecialError> {
    check_df(df)?;
    let q = q.value();
    if q == 0.0 {
        return Err(SpecialError::UnboundedQuantile);
    }
    if q == 1.0 {
        return Ok(0.0);
    }
    invert_increasing(|x| Ok(1.0 - chisq_sf(df, x)?.value()), 1.0 - q, 2.0 * df.max(1.0))
        .map(|x0| {
            // refine against the survival function itself to keep tail accuracy
            polish_sf(df, q, x0)
        })
}

fn polish_sf(df: f64, q: f64, mut x: f64) -> f64 {
    // Newton in log-survival; the derivative is -density/survival.
    for _ in 0..40 {
        let sf = match chisq_sf(df, x) {
            Ok(p) => p.value(),
            Err(_) => return x,
        };
        if sf <= 0.0 {
            return x;
        }
        let log_density = -0.5 * df * 2f64.ln() - match log_gamma(df / 2.0) {
            Ok(v) => v,
            Err(_) => return x,
        } - 0.5 * x
            + (0.5 * df - 1.0) * x.ln();
        let g = sf.ln() - q.ln();
        let gprime = -log_density.exp() / sf;
        if gprime == 0.0 {
            return x;
        }
        let step = g / gprime;
        let next = x - step;
        if !next.is_finite() || next <= 0.0 {
            return x;
        }
        x = next;
        if step.abs() <= 1e-12 * x.max(1.0) {
            break;
        }
    }
    x
}

/// F distribution CDF via the regularized incomplete beta.
pub fn f_cdf(df1: f64, df2: f64, x: f64) -> Result<Probability, SpecialError> {
    check_df(df1)?;
    check_df(df2)?;
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("F CDF requires x >= 0"));
    }
    let w = df1 * x / (df1 * x + df2);
    Ok(Probability::from_cdf(beta_inc(df1 / 2.0, df2 / 2.0, w)?))
}

/// F distribution survival function, computed directly in the upper tail.
pub fn f_sf(df1: f64, df2: f64, x: f64) -> Result<Probability, SpecialError> {
    check_df(df1)?;
    check_df(df2)?;
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("F SF requires x >= 0"));
    }
    let w = df2 / (df1 * x + df2);
    Ok(Probability::from_cdf(beta_inc(df2 / 2.0, df1 / 2.0, w)?))
}

/// F distribution quantile by bracketed bisection on the CDF.
pub fn f_quantile(df1: f64, df2: f64, p: Probability) -> Result<f64, SpecialError> {
    check_df(df1)?;
    check_df(df2)?;
    let p = p.value();
    if p == 1.0 {
        return Err(SpecialError::UnboundedQuantile);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    invert_increasing(|x| Ok(f_cdf(df1, df2, x)?.value()), p, 1.0)
}

/// F quantile expressed through the survival function.
pub fn f_quantile_from_sf(df1: f64, df2: f64, q: Probability) -> Result<f64, SpecialError> {
    check_df(df1)?;
    check_df(df2)?;
    let q = q.value();
    if q == 0.0 {
        return Err(SpecialError::UnboundedQuantile);
    }
    if q == 1.0 {
        return Ok(0.0);
    }
    // bisection directly on the (decreasing) survival function
    let mut hi = 1.0f64;
    while f_sf(df1, df2, hi)?.value() > q {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(SpecialError::NoConvergence);
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f_sf(df1, df2, mid)?.value() > q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection solve of `cdf(x) = p` for an increasing CDF on `[0, inf)`.
fn invert_increasing<F>(cdf: F, p: f64, initial_hi: f64) -> Result<f64, SpecialError>
where
    F: Fn(f64) -> Result<f64, SpecialError>,
{
    let mut hi = initial_hi;
    while cdf(hi)? < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(SpecialError::NoConvergence);
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
