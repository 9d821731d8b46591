//! Default geometry of the synthetic datasets, in one place.
//!
//! The coordinates are not prescribed anywhere else; these values reproduce the
//! intended qualitative geometry: a staircase corridor in the unit square whose
//! gap widens from the bottom-left to the top-right, a linear feature with a much smaller margin than
//! the five-slab feature, and two regions with very different class gaps.

/// Narrow Corridor: smallest and largest cross-class gap along the corridor.
pub const NC_GAP_MIN: f64 = 0.1;
pub const NC_GAP_MAX: f64 = 0.9;
/// Number of stairs (one vertical plus one horizontal run each) per chain.
pub const NC_STAIRS: usize = 8;
/// Points on each of the two class chains.
pub const NC_POINTS_PER_CHAIN: usize = 64;

/// LMS-5: half-gap of the linear coordinate (class 0 at x ≤ −m, class 1 at x ≥ m).
pub const LMS_M_LIN: f64 = 0.05;
/// Gap between adjacent slabs along the second coordinate.
pub const LMS_M_SLAB: f64 = 0.8;
/// Thickness of one slab.
pub const LMS_SLAB_WIDTH: f64 = 0.1;
/// Extent of the linear coordinate: samples lie in `[m_lin, x_extent]` (mirrored for class 0).
pub const LMS_X_EXTENT: f64 = 1.0;
pub const LMS_POINTS_PER_CLASS: usize = 90;

/// Two-distance toy: class gaps of the two regions.
pub const TWO_DIST_EPS1: f64 = 0.1;
pub const TWO_DIST_EPS2: f64 = 1.0;
/// Length of each cluster along the second coordinate.
pub const TWO_DIST_CLUSTER_LENGTH: f64 = 1.0;
/// Vertical distance between the two regions.
pub const TWO_DIST_REGION_GAP: f64 = 1.5;
pub const TWO_DIST_POINTS_PER_CLUSTER: usize = 20;

/// One-dimensional Gaussian mixture.
pub const GAUSS_MU1: f64 = -1.0;
pub const GAUSS_MU2: f64 = 1.0;
pub const GAUSS_SIGMA: f64 = 0.0;
