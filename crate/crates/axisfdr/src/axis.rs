//! Sign-invariant unit axes.
//!
//! An axis is a unit vector in 3-space where `x` and `-x` name the same
//! object. Every [`UnitAxis`] is stored in canonical form: the first
//! component whose magnitude exceeds the sign tolerance (scanning x, y, z)
//! is positive, so equality of axes is plain equality of the stored
//! components.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{self, Vec3};

/// Magnitude below which a component is treated as zero when picking the
/// canonical sign.
pub const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AxisError {
    #[error("axis components must be finite")]
    NonFinite,
    #[error("axis vector has near-zero length {0:.3e}")]
    ZeroLength(f64),
    #[error("a sample must contain at least one axis")]
    EmptySample,
}

/// A unit vector in 3-space modulo sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitAxis {
    components: [f64; 3],
}

impl UnitAxis {
    pub const X: UnitAxis = UnitAxis { components: [1.0, 0.0, 0.0] };
    pub const Y: UnitAxis = UnitAxis { components: [0.0, 1.0, 0.0] };
    pub const Z: UnitAxis = UnitAxis { components: [0.0, 0.0, 1.0] };

    /// Builds an axis from an arbitrary non-zero vector, normalizing and
    /// canonicalizing the sign. Vectors already of unit length (within
    /// 1e-12) are kept bit-for-bit so stored axes round-trip exactly.
    pub fn new(v: [f64; 3]) -> Result<Self, AxisError> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(AxisError::NonFinite);
        }
        let n = eigen::norm(&v);
        if n < 1e-6 {
            return Err(AxisError::ZeroLength(n));
        }
        if (n - 1.0).abs() < 1e-12 {
            return Ok(Self::from_unit(v));
        }
        Ok(Self::from_unit(eigen::scale(&v, 1.0 / n)))
    }

    /// Canonicalizes a vector already known to have unit length.
    pub(crate) fn from_unit(v: Vec3) -> Self {
        debug_assert!((eigen::norm(&v) - 1.0).abs() < 1e-9);
        UnitAxis { components: canonical_sign(v) }
    }

    pub fn components(&self) -> [f64; 3] {
        self.components
    }

    /// Cosine of the angle to another axis, in `[-1, 1]`; only its square is
    /// sign-invariant.
    pub fn dot(&self, other: &UnitAxis) -> f64 {
        eigen::dot(&self.components, &other.components)
    }

    /// Angle between two axes in radians, in `[0, pi/2]`.
    pub fn angle_to(&self, other: &UnitAxis) -> f64 {
        self.dot(other).abs().min(1.0).acos()
    }
}

fn canonical_sign(v: Vec3) -> Vec3 {
    for c in v {
        if c.abs() > SIGN_TOLERANCE {
            return if c < 0.0 { eigen::scale(&v, -1.0) } else { v };
        }
    }
    v
}

/// An ordered, non-empty collection of axes.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisSample {
    axes: Vec<UnitAxis>,
}

impl AxisSample {
    pub fn new(axes: Vec<UnitAxis>) -> Result<Self, AxisError> {
        if axes.is_empty() {
            return Err(AxisError::EmptySample);
        }
        Ok(AxisSample { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axes(&self) -> &[UnitAxis] {
        &self.axes
    }

    pub fn iter(&self) -> impl Iterator<Item = &UnitAxis> {
        self.axes.iter()
    }

    /// Concatenates several samples into a pooled sample.
    pub fn pooled<'a>(samples: impl IntoIterator<Item = &'a AxisSample>) -> Result<Self, AxisError> {
        let axes: Vec<UnitAxis> = samples
            .into_iter()
            .flat_map(|s| s.axes.iter().copied())
            .collect();
        AxisSample::new(axes)
    }
}
