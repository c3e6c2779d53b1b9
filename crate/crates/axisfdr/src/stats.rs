//! Dispersion-ratio test statistics for equality of mean axes.
//!
//! Under a shared high concentration, the two-sample statistic is F(2,
//! 2(n-2)) distributed and the q-sample generalization F(2(q-1), 2(N-q)).
//! A quantile transform maps either onto a chi-square scale, where the
//! empirical-null machinery operates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::{AxisError, AxisSample};
use crate::special::{self, SpecialError};
use crate::volume::{DirectionVolume, Mask, StatisticVolume, VolumeError};
use crate::watson::{concentration_a, ScatterMatrix, WatsonError};

/// Intragroup dispersion below this is treated as degenerate: the ratio is
/// pure rounding noise.
const INTRAGROUP_FLOOR: f64 = 1e-14;
/// Most negative intergroup dispersion accepted as rounding before it is
/// clamped to zero.
const NUMERATOR_SLACK: f64 = -1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum StatError {
    #[error("each group needs at least 2 axes, got {0}")]
    GroupTooSmall(usize),
    #[error("at least 2 groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("zero intragroup dispersion: statistic is degenerate")]
    DegenerateDispersion,
    #[error("intergroup dispersion {0} is negative beyond rounding slack")]
    NegativeIntergroup(f64),
    #[error(transparent)]
    Watson(#[from] WatsonError),
    #[error(transparent)]
    Axis(#[from] AxisError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Two or more axis samples compared at one location.
#[derive(Clone, Debug)]
pub struct GroupedAxisSample {
    groups: Vec<AxisSample>,
}

impl GroupedAxisSample {
    pub fn new(groups: Vec<AxisSample>) -> Result<Self, StatError> {
        if groups.len() < 2 {
            return Err(StatError::TooFewGroups(groups.len()));
        }
        if let Some(small) = groups.iter().find(|g| g.len() < 2) {
            return Err(StatError::GroupTooSmall(small.len()));
        }
        Ok(GroupedAxisSample { groups })
    }

    pub fn groups(&self) -> &[AxisSample] {
        &self.groups
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(AxisSample::len).sum()
    }
}

/// A dispersion-ratio statistic with its F degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatsonStatistic {
    pub value: f64,
    pub df_num: u32,
    pub df_den: u32,
}

/// Largest scatter eigenvalue, failing when the mean axis is not
/// identifiable.
fn gamma_checked(scatter: &ScatterMatrix) -> Result<f64, StatError> {
    scatter.principal_axis().map(|(gamma, _)| gamma).map_err(StatError::from)
}

fn assemble(
    intergroup: f64,
    intragroup: f64,
    df_num: u32,
    df_den: u32,
) -> Result<WatsonStatistic, StatError> {
    if intragroup < INTRAGROUP_FLOOR {
        return Err(StatError::DegenerateDispersion);
    }
    if intergroup < NUMERATOR_SLACK {
        return Err(StatError::NegativeIntergroup(intergroup));
    }
    let numerator = intergroup.max(0.0) / df_num as f64;
    let denominator = intragroup / df_den as f64;
    Ok(WatsonStatistic { value: numerator / denominator, df_num, df_den })
}

/// Two-sample statistic: intergroup over intragroup dispersion, each scaled
/// by its degrees of freedom (2 and 2(n-2)).
pub fn watson_two_sample(g1: &AxisSample, g2: &AxisSample) -> Result<WatsonStatistic, StatError> {
    for g in [g1, g2] {
        if g.len() < 2 {
            return Err(StatError::GroupTooSmall(g.len()));
        }
    }
    let (n1, n2) = (g1.len() as f64, g2.len() as f64);
    let n = n1 + n2;
    let s1 = ScatterMatrix::from_sample(g1);
    let s2 = ScatterMatrix::from_sample(g2);
    let pooled = ScatterMatrix::pooled(&[(&s1, g1.len()), (&s2, g2.len())]);
    let intragroup = n1 * (1.0 - gamma_checked(&s1)?) + n2 * (1.0 - gamma_checked(&s2)?);
    let pooled_dispersion = n * (1.0 - gamma_checked(&pooled)?);
    let intergroup = pooled_dispersion - intragroup;
    let df_den = 2 * (g1.len() + g2.len() - 2) as u32;
    assemble(intergroup, intragroup, 2, df_den)
}

/// Multi-sample statistic over q groups with degrees of freedom
/// (2(q-1), 2(N-q)); agrees with [`watson_two_sample`] at q = 2.
pub fn watson_multi_sample(grouped: &GroupedAxisSample) -> Result<WatsonStatistic, StatError> {
    let q = grouped.groups.len();
    let total = grouped.total();
    let scatters: Vec<ScatterMatrix> =
        grouped.groups.iter().map(ScatterMatrix::from_sample).collect();
    let parts: Vec<(&ScatterMatrix, usize)> = scatters
        .iter()
        .zip(&grouped.groups)
        .map(|(s, g)| (s, g.len()))
        .collect();
    let pooled = ScatterMatrix::pooled(&parts);
    let mut intragroup = 0.0;
    for (s, g) in scatters.iter().zip(&grouped.groups) {
        intragroup += g.len() as f64 * (1.0 - gamma_checked(s)?);
    }
    let pooled_dispersion = total as f64 * (1.0 - gamma_checked(&pooled)?);
    let intergroup = pooled_dispersion - intragroup;
    let df_num = 2 * (q - 1) as u32;
    let df_den = 2 * (total - q) as u32;
    assemble(intergroup, intragroup, df_num, df_den)
}

/// Quantile transform from an F(df1, df2) scale to a chi-square(target_df)
/// scale. Strictly increasing, maps 0 to 0; probabilities beyond 0.5 go
/// through the survival functions so the upper tail keeps full precision.
pub fn f_to_chisq(t: f64, df1: u32, df2: u32, target_df: f64) -> Result<f64, SpecialError> {
    if !t.is_finite() || t < 0.0 {
        return Err(SpecialError::Domain("statistic must be finite and >= 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let (d1, d2) = (df1 as f64, df2 as f64);
    let p = special::f_cdf(d1, d2, t)?;
    if p.value() <= 0.5 {
        special::chisq_quantile(target_df, p)
    } else {
        let sf = special::f_sf(d1, d2, t)?;
        special::chisq_quantile_from_sf(target_df, sf)
    }
}

/// Inverse of [`f_to_chisq`]: maps a chi-square(target_df) value back onto
/// the F(df1, df2) scale.
pub fn chisq_to_f(x: f64, target_df: f64, df1: u32, df2: u32) -> Result<f64, SpecialError> {
    if !x.is_finite() || x < 0.0 {
        return Err(SpecialError::Domain("statistic must be finite and >= 0"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let (d1, d2) = (df1 as f64, df2 as f64);
    let p = special::chisq_cdf(target_df, x)?;
    if p.value() <= 0.5 {
        special::f_quantile(d1, d2, p)
    } else {
        let sf = special::chisq_sf(target_df, x)?;
        special::f_quantile_from_sf(d1, d2, sf)
    }
}

/// Why a voxel was dropped from the effective mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefectReason {
    /// Some subject has no defined axis at the voxel.
    MissingAxis,
    /// A group or pooled mean axis is not identifiable.
    DegenerateMean,
    /// Zero intragroup dispersion: the ratio is undefined.
    ZeroDispersion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelDefect {
    pub index: usize,
    pub reason: DefectReason,
}

/// A voxelwise statistic map together with the effective mask (defective
/// voxels removed) and diagnostics.
#[derive(Clone, Debug)]
pub struct StatisticMap {
    pub values: StatisticVolume,
    pub mask: Mask,
    pub defects: Vec<VoxelDefect>,
    /// In-mask voxels whose pooled concentration estimate falls below 1;
    /// the high-concentration null is doubtful there. They stay in the
    /// mask — the empirical null absorbs them — but are reported.
    pub low_concentration: Vec<usize>,
}

/// Computes the per-voxel statistic for `groups` of subject volumes over
/// `mask`, optionally transformed to the chi-square scale with
/// `transform_df` degrees of freedom.
///
/// A deterministic parallel map: results do not depend on evaluation order
/// or worker count.
pub fn statistic_map(
    groups: &[Vec<DirectionVolume>],
    mask: &Mask,
    transform_df: Option<f64>,
) -> Result<StatisticMap, StatError> {
    if groups.len() < 2 {
        return Err(StatError::TooFewGroups(groups.len()));
    }
    for group in groups {
        if group.len() < 2 {
            return Err(StatError::GroupTooSmall(group.len()));
        }
        for vol in group {
            vol.geometry().same_grid(mask.geometry())?;
        }
    }
    let geometry = *mask.geometry();
    // gamma below A(1) means the pooled concentration estimate is below 1
    let low_gamma = concentration_a(1.0)?;

    enum VoxelOutcome {
        Outside,
        Value { t: f64, low_concentration: bool },
        Defect(DefectReason),
    }

    let outcomes: Vec<VoxelOutcome> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            if !mask.contains(idx) {
                return Ok(VoxelOutcome::Outside);
            }
            let mut samples = Vec::with_capacity(groups.len());
            for group in groups {
                let axes: Option<Vec<_>> = group.iter().map(|v| v.axis(idx)).collect();
                match axes {
                    Some(axes) => samples.push(AxisSample::new(axes)?),
                    None => return Ok(VoxelOutcome::Defect(DefectReason::MissingAxis)),
                }
            }
            let result = if samples.len() == 2 {
                watson_two_sample(&samples[0], &samples[1])
            } else {
                watson_multi_sample(&GroupedAxisSample::new(samples.clone())?)
            };
            let stat = match result {
                Ok(s) => s,
                Err(StatError::Watson(WatsonError::DegenerateMean { .. })) => {
                    return Ok(VoxelOutcome::Defect(DefectReason::DegenerateMean))
                }
                Err(StatError::DegenerateDispersion) => {
                    return Ok(VoxelOutcome::Defect(DefectReason::ZeroDispersion))
                }
                Err(e) => return Err(e),
            };
            let scatters: Vec<ScatterMatrix> =
                samples.iter().map(ScatterMatrix::from_sample).collect();
            let parts: Vec<(&ScatterMatrix, usize)> = scatters
                .iter()
                .zip(&samples)
                .map(|(s, g)| (s, g.len()))
                .collect();
            let pooled = ScatterMatrix::pooled(&parts);
            let low_concentration = pooled.eigenvalues()[0] < low_gamma;
            let t = match transform_df {
                Some(df) => f_to_chisq(stat.value, stat.df_num, stat.df_den, df)?,
                None => stat.value,
            };
            Ok(VoxelOutcome::Value { t, low_concentration })
        })
        .collect::<Result<_, StatError>>()?;

    let mut values = StatisticVolume::filled(geometry, f64::NAN);
    let mut membership = vec![false; geometry.len()];
    let mut defects = Vec::new();
    let mut low_concentration = Vec::new();
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            VoxelOutcome::Outside => {}
            VoxelOutcome::Value { t, low_concentration: low } => {
                values.set(idx, t);
                membership[idx] = true;
                if low {
                    low_concentration.push(idx);
                }
            }
            VoxelOutcome::Defect(reason) => defects.push(VoxelDefect { index: idx, reason }),
        }
    }
    let mask = Mask::from_membership(geometry, membership)?;
    Ok(StatisticMap { values, mask, defects, low_concentration })
}
