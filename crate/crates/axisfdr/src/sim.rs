//! Synthetic data generation and Monte Carlo validation of the pipeline's
//! distributional claims: null quantiles, single-location power, FDR
//! control, and the behavior of the empirical null under smoothing.
//!
//! Every operation is a pure function of its parameters and a seed.
//! Replicates and voxels draw from per-index ChaCha streams, so results are
//! independent of scheduling and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::UnitAxis;
use crate::eigen;
use crate::null::{
    fdr_curve, fit_empirical_null, observed_grid, select_threshold, EmpiricalNullFit, Histogram,
    NullError, NullModel,
};
use crate::special::{f_quantile, Probability, SpecialError};
use crate::stats::{statistic_map, watson_two_sample, StatError};
use crate::volume::{
    box_smooth, extract_clusters, shrink_mask, DirectionVolume, GridGeometry, Mask, VolumeError,
};
use crate::watson::{tangent_basis, WatsonError, WatsonParams};

/// Stream-id namespaces so different operations sharing a seed never reuse
/// a generator stream.
const DOMAIN_NULL: u64 = 1;
const DOMAIN_POWER: u64 = 2;
const DOMAIN_VOLUME: u64 = 3;
const DOMAIN_FDR: u64 = 4;

const MAX_REDRAWS_PER_REPLICATE: u64 = 1000;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("replicate kept drawing degenerate statistics after {MAX_REDRAWS_PER_REPLICATE} attempts")]
    TooManyRedraws,
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Null(#[from] NullError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Watson(#[from] WatsonError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Scenario for volume-level experiments: two groups drawn from a
/// background Watson law, with the second group's mean axis rotated by
/// `delta_deg` inside the signal region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub geometry: GridGeometry,
    pub n1: usize,
    pub n2: usize,
    pub kappa: f64,
    pub background_axis: UnitAxis,
    /// Voxel indices where the group means differ.
    pub signal_region: Vec<usize>,
    /// Angle between group means inside the region, in degrees, in [0, 90].
    pub delta_deg: f64,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(SimError::InvalidSpec("group sizes must be >= 2".into()));
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(SimError::InvalidSpec(format!(
                "background concentration must be positive, got {}",
                self.kappa
            )));
        }
        if !(0.0..=90.0).contains(&self.delta_deg) {
            return Err(SimError::InvalidSpec(format!(
                "signal offset must lie in [0, 90] degrees, got {}",
                self.delta_deg
            )));
        }
        if let Some(&bad) = self.signal_region.iter().find(|&&i| i >= self.geometry.len()) {
            return Err(SimError::InvalidSpec(format!(
                "signal voxel {bad} outside grid of {} voxels",
                self.geometry.len()
            )));
        }
        Ok(())
    }

    /// The second group's mean axis inside the signal region: the
    /// background axis rotated by `delta_deg` about a fixed perpendicular
    /// axis.
    pub fn signal_axis(&self) -> UnitAxis {
        rotate_by_degrees(&self.background_axis, self.delta_deg)
    }
}

/// Rotates an axis by `degrees` about a deterministic perpendicular axis.
pub fn rotate_by_degrees(axis: &UnitAxis, degrees: f64) -> UnitAxis {
    let mu = axis.components();
    let (t1, _) = tangent_basis(&mu);
    let (s, c) = degrees.to_radians().sin_cos();
    let w = eigen::cross(&t1, &mu);
    UnitAxis::new([
        c * mu[0] + s * w[0],
        c * mu[1] + s * w[1],
        c * mu[2] + s * w[2],
    ])
    .expect("rotation of a unit axis is a unit axis")
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub estimate: f64,
    pub standard_error: f64,
    pub replications: usize,
    pub seed: u64,
}

/// Simulated null statistics plus the number of degenerate replicates that
/// had to be redrawn.
#[derive(Clone, Debug, PartialEq)]
pub struct NullStatistics {
    pub values: Vec<f64>,
    pub redraws: u64,
}

fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) | index);
    rng
}

/// Draws `reps` independent two-sample statistics under the null: both
/// groups sampled from one Watson law with the given concentration.
pub fn simulate_null_statistics(
    kappa: f64,
    n1: usize,
    n2: usize,
    reps: usize,
    seed: u64,
) -> Result<NullStatistics, SimError> {
    if reps == 0 {
        return Err(SimError::InvalidSpec("need at least one replication".into()));
    }
    if n1 < 2 || n2 < 2 {
        return Err(SimError::InvalidSpec("group sizes must be >= 2".into()));
    }
    let params = WatsonParams::new(UnitAxis::Z, kappa)?;
    let draws: Vec<(f64, u64)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, DOMAIN_NULL, rep);
            let mut redraws = 0;
            loop {
                let g1 = params.sample_with(n1, &mut rng);
                let g2 = params.sample_with(n2, &mut rng);
                match watson_two_sample(&g1, &g2) {
                    Ok(t) => return Ok((t.value, redraws)),
                    Err(_) => {
                        redraws += 1;
                        if redraws > MAX_REDRAWS_PER_REPLICATE {
                            return Err(SimError::TooManyRedraws);
                        }
                    }
                }
            }
        })
        .collect::<Result<_, SimError>>()?;
    let redraws = draws.iter().map(|(_, r)| r).sum();
    Ok(NullStatistics { values: draws.into_iter().map(|(v, _)| v).collect(), redraws })
}

/// Monte Carlo power of the level-`alpha` F test when the two group means
/// are `delta_deg` apart and both groups share concentration `kappa`.
pub fn estimate_power(
    delta_deg: f64,
    kappa: f64,
    n1: usize,
    n2: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloResult, SimError> {
    if reps == 0 {
        return Err(SimError::InvalidSpec("need at least one replication".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(SimError::InvalidSpec(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n1 < 2 || n2 < 2 {
        return Err(SimError::InvalidSpec("group sizes must be >= 2".into()));
    }
    let mu1 = UnitAxis::Z;
    let mu2 = rotate_by_degrees(&mu1, delta_deg);
    let p1 = WatsonParams::new(mu1, kappa)?;
    let p2 = WatsonParams::new(mu2, kappa)?;
    let df_den = 2 * (n1 + n2 - 2);
    let threshold = f_quantile(2.0, df_den as f64, Probability::new(1.0 - alpha)?)?;
    let hits: u64 = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, DOMAIN_POWER, rep);
            let mut redraws = 0;
            loop {
                let g1 = p1.sample_with(n1, &mut rng);
                let g2 = p2.sample_with(n2, &mut rng);
                match watson_two_sample(&g1, &g2) {
                    Ok(t) => return Ok(u64::from(t.value >= threshold)),
                    Err(_) => {
                        redraws += 1;
                        if redraws > MAX_REDRAWS_PER_REPLICATE {
                            return Err(SimError::TooManyRedraws);
                        }
                    }
                }
            }
        })
        .sum::<Result<u64, SimError>>()?;
    let p = hits as f64 / reps as f64;
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    Ok(MonteCarloResult { estimate: p, standard_error: se, replications: reps, seed })
}

/// The two simulated groups and the ground-truth signal mask.
#[derive(Clone, Debug)]
pub struct VolumePair {
    pub group1: Vec<DirectionVolume>,
    pub group2: Vec<DirectionVolume>,
    pub truth: Mask,
}

/// Simulates per-voxel Watson draws for both groups. Inside the signal
/// region the second group's mean axis is rotated by the spec's offset.
pub fn simulate_volume_pair(spec: &SimulationSpec) -> Result<VolumePair, SimError> {
    simulate_volume_pair_rep(spec, 0)
}

fn simulate_volume_pair_rep(spec: &SimulationSpec, rep: u64) -> Result<VolumePair, SimError> {
    spec.validate()?;
    let geometry = spec.geometry;
    let background = WatsonParams::new(spec.background_axis, spec.kappa)?;
    let signal = WatsonParams::new(spec.signal_axis(), spec.kappa)?;
    let in_region = {
        let mut v = vec![false; geometry.len()];
        for &i in &spec.signal_region {
            v[i] = true;
        }
        v
    };
    // one stream per voxel: group 1 then group 2, subjects in order
    let per_voxel: Vec<(Vec<UnitAxis>, Vec<UnitAxis>)> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream_rng(spec.seed, DOMAIN_VOLUME, (rep << 40) | idx as u64);
            let g1 = background.sample_with(spec.n1, &mut rng);
            let params2 = if in_region[idx] { &signal } else { &background };
            let g2 = params2.sample_with(spec.n2, &mut rng);
            (g1.axes().to_vec(), g2.axes().to_vec())
        })
        .collect();
    let mut group1 = vec![DirectionVolume::undefined(geometry); spec.n1];
    let mut group2 = vec![DirectionVolume::undefined(geometry); spec.n2];
    for (idx, (g1, g2)) in per_voxel.into_iter().enumerate() {
        for (s, axis) in g1.into_iter().enumerate() {
            group1[s].set_axis(idx, Some(axis));
        }
        for (s, axis) in g2.into_iter().enumerate() {
            group2[s].set_axis(idx, Some(axis));
        }
    }
    let truth = Mask::from_indices(geometry, &spec.signal_region)?;
    Ok(VolumePair { group1, group2, truth })
}

/// Mean false-discovery proportion of the theoretical-null procedure with
/// p0 = 1 over independently simulated volumes.
pub fn fdr_control_experiment(
    spec: &SimulationSpec,
    alpha: f64,
    reps: usize,
) -> Result<MonteCarloResult, SimError> {
    spec.validate()?;
    if reps == 0 {
        return Err(SimError::InvalidSpec("need at least one replication".into()));
    }
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(SimError::InvalidSpec(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let fdp: Vec<f64> = (0..reps as u64)
        .map(|rep| {
            // replicates occupy a distinct stream namespace
            let volumes = simulate_volume_pair_rep(spec, (DOMAIN_FDR << 16) | rep)?;
            let map = statistic_map(
                &[volumes.group1, volumes.group2],
                &Mask::all(spec.geometry),
                Some(2.0),
            )?;
            let values = map.values.masked_values(&map.mask);
            if values.is_empty() {
                return Ok(0.0);
            }
            let grid = observed_grid(&values);
            let curve = fdr_curve(&values, &NullModel::Theoretical { df: 2.0 }, 1.0, &grid)?;
            let Some(u) = select_threshold(&curve, alpha) else {
                return Ok(0.0);
            };
            let hits = crate::null::count_discoveries(&map.values, &map.mask, u);
            if hits.count() == 0 {
                return Ok(0.0);
            }
            let false_hits =
                hits.voxels.iter().filter(|&&i| !volumes.truth.contains(i)).count();
            Ok(false_hits as f64 / hits.count() as f64)
        })
        .collect::<Result<_, SimError>>()?;
    let n = fdp.len() as f64;
    let mean = fdp.iter().sum::<f64>() / n;
    let var = fdp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(MonteCarloResult {
        estimate: mean,
        standard_error: (var / n).sqrt(),
        replications: reps,
        seed: spec.seed,
    })
}

/// One sweep row: the analysis summary for a kernel size and FDR level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b: usize,
    pub mask_size: usize,
    pub p0_hat: Option<f64>,
    pub a_hat: Option<f64>,
    pub nu_hat: Option<f64>,
    pub t90: Option<f64>,
    pub alpha: f64,
    pub u_alpha: Option<f64>,
    pub discoveries: usize,
    pub n_clusters: usize,
    /// Largest cluster sizes, descending, at most three.
    pub largest_clusters: Vec<usize>,
    pub fit_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Runs the smoothing sweep: for each kernel size, smooth the statistic
/// map, refit the empirical null, and threshold at each FDR level.
///
/// Fit failures are recorded in the affected rows and the sweep continues.
pub fn smoothing_sweep(
    spec: &SimulationSpec,
    b_values: &[usize],
    alphas: &[f64],
    bin_width: f64,
    fit_upper: f64,
) -> Result<SweepTable, SimError> {
    spec.validate()?;
    if b_values.is_empty() || alphas.is_empty() {
        return Err(SimError::InvalidSpec("need at least one kernel size and one level".into()));
    }
    if let Some(&b) = b_values.iter().find(|&&b| b % 2 == 0) {
        return Err(SimError::Volume(VolumeError::EvenKernel(b)));
    }
    let volumes = simulate_volume_pair(spec)?;
    let map = statistic_map(
        &[volumes.group1, volumes.group2],
        &Mask::all(spec.geometry),
        Some(2.0),
    )?;
    let mut rows = Vec::new();
    for &b in b_values {
        let smoothed = box_smooth(&map.values, b)?;
        let mask = shrink_mask(&map.mask, &smoothed)?;
        let values = smoothed.masked_values(&mask);
        let fit: Result<EmpiricalNullFit, NullError> = if values.is_empty() {
            Err(NullError::EmptyInput)
        } else {
            Histogram::new(&values, bin_width).and_then(|h| fit_empirical_null(&h, fit_upper))
        };
        match &fit {
            Ok(f) => {
                let grid = observed_grid(&values);
                let null = NullModel::Empirical(f.clone());
                let curve = fdr_curve(&values, &null, f.p0, &grid)?;
                for &alpha in alphas {
                    let u = select_threshold(&curve, alpha);
                    let (discoveries, n_clusters, largest) = match u {
                        Some(u) => {
                            let hits = crate::null::count_discoveries(&smoothed, &mask, u);
                            let clusters = extract_clusters(&hits.voxels, &spec.geometry);
                            let mut sizes = clusters.sizes();
                            sizes.truncate(3);
                            (hits.count(), clusters.len(), sizes)
                        }
                        None => (0, 0, Vec::new()),
                    };
                    rows.push(SweepRow {
                        b,
                        mask_size: mask.count(),
                        p0_hat: Some(f.p0),
                        a_hat: Some(f.scale),
                        nu_hat: Some(f.df),
                        t90: Some(f.fit_limit),
                        alpha,
                        u_alpha: u,
                        discoveries,
                        n_clusters,
                        largest_clusters: largest,
                        fit_error: None,
                    });
                }
            }
            Err(e) => {
                for &alpha in alphas {
                    rows.push(SweepRow {
                        b,
                        mask_size: mask.count(),
                        p0_hat: None,
                        a_hat: None,
                        nu_hat: None,
                        t90: None,
                        alpha,
                        u_alpha: None,
                        discoveries: 0,
                        n_clusters: 0,
                        largest_clusters: Vec::new(),
                        fit_error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    Ok(SweepTable { rows })
}
