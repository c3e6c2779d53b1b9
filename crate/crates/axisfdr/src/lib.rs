//! Detection of group differences between sets of axial direction fields on a
//! 3D voxel grid.
//!
//! The pipeline compares two (or more) groups of per-voxel unit axes by
//! fitting the bipolar Watson model at every voxel, forming an F-type
//! dispersion-ratio statistic, transforming it to a chi-square scale, and
//! selecting interesting voxels with false discovery rate control against
//! either the theoretical null or a scaled chi-square empirical null fitted
//! to the statistic histogram by Poisson regression. Optional box smoothing
//! of the statistic map trades spatial resolution for power.
//!
//! Modules:
//! - [`axis`]: sign-invariant unit axes and samples of them
//! - [`watson`]: the bipolar Watson distribution, its estimators and sampler
//! - [`special`]: log-gamma, incomplete gamma/beta, chi-square and F CDFs
//! - [`stats`]: the Watson two-/multi-sample statistics and voxelwise maps
//! - [`null`]: histograms, empirical-null fitting, FDR curves and thresholds
//! - [`volume`]: 3D grid types, box smoothing, mask shrinkage, clustering
//! - [`io`]: binary volume file formats (`.dvol`, `.svol`, `.mvol`)
//! - [`sim`]: synthetic data generation and Monte Carlo validation

pub mod axis;
pub mod io;
pub mod null;
pub mod sim;
pub mod special;
pub mod stats;
pub mod volume;
pub mod watson;

mod eigen;
mod quad;

pub use axis::{AxisError, AxisSample, UnitAxis};
pub use null::{EmpiricalNullFit, FdrCurve, Histogram, NullModel};
pub use stats::{GroupedAxisSample, StatisticMap, WatsonStatistic};
pub use volume::{DirectionVolume, GridGeometry, Mask, StatisticVolume};
pub use watson::{DispersionSummary, WatsonParams};
