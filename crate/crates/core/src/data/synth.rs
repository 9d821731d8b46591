//! Synthetic dataset generators. Every generator is a pure function of its spec.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

use super::defaults as dflt;
use super::LabeledSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// Two staircase chains mirrored about the diagonal `y = x` of the unit
    /// square. The gap between their closest corners grows linearly from
    /// `gap_min` at the bottom-left to `gap_max` at the top-right.
    NarrowCorridor { gap_min: f64, gap_max: f64, stairs: usize },
    /// Linear coordinate with half-gap `m_lin`, five alternating slabs with gap `m_slab`.
    Lms5 {
        m_lin: f64,
        m_slab: f64,
        slab_width: f64,
        x_extent: f64,
    },
    /// Two regions whose cross-class gaps are `eps1` and `eps2`.
    TwoDistance {
        eps1: f64,
        eps2: f64,
        cluster_length: f64,
        region_gap: f64,
    },
    /// `N(mu1, σ²)` labelled 0 (the "−1" class) and `N(mu2, σ²)` labelled 1 ("+1").
    Gauss1d { mu1: f64, mu2: f64, sigma: f64 },
}

impl SynthKind {
    pub fn narrow_corridor() -> Self {
        SynthKind::NarrowCorridor {
            gap_min: dflt::NC_GAP_MIN,
            gap_max: dflt::NC_GAP_MAX,
            stairs: dflt::NC_STAIRS,
        }
    }

    pub fn lms5() -> Self {
        SynthKind::Lms5 {
            m_lin: dflt::LMS_M_LIN,
            m_slab: dflt::LMS_M_SLAB,
            slab_width: dflt::LMS_SLAB_WIDTH,
            x_extent: dflt::LMS_X_EXTENT,
        }
    }

    pub fn two_distance() -> Self {
        SynthKind::TwoDistance {
            eps1: dflt::TWO_DIST_EPS1,
            eps2: dflt::TWO_DIST_EPS2,
            cluster_length: dflt::TWO_DIST_CLUSTER_LENGTH,
            region_gap: dflt::TWO_DIST_REGION_GAP,
        }
    }

    pub fn gauss1d() -> Self {
        SynthKind::Gauss1d {
            mu1: dflt::GAUSS_MU1,
            mu2: dflt::GAUSS_MU2,
            sigma: dflt::GAUSS_SIGMA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::NarrowCorridor { .. } => "narrow-corridor",
            SynthKind::Lms5 { .. } => "lms5",
            SynthKind::TwoDistance { .. } => "two-distance",
            SynthKind::Gauss1d { .. } => "gauss1d",
        }
    }

    pub fn default_count(&self) -> usize {
        match self {
            SynthKind::NarrowCorridor { .. } => dflt::NC_POINTS_PER_CHAIN,
            SynthKind::Lms5 { .. } => dflt::LMS_POINTS_PER_CLASS,
            SynthKind::TwoDistance { .. } => dflt::TWO_DIST_POINTS_PER_CLUSTER,
            SynthKind::Gauss1d { .. } => 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Per chain (NC), per class (LMS-5, Gaussian), or per cluster (two-distance).
    pub points_per_cluster: usize,
    /// Std of isotropic Gaussian jitter added to every coordinate.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, seed: u64) -> Self {
        Self {
            points_per_cluster: kind.default_count(),
            kind,
            noise: 0.0,
            seed,
        }
    }

    pub fn with_points(mut self, n: usize) -> Self {
        self.points_per_cluster = n;
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.points_per_cluster == 0 {
            v.push("points_per_cluster must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            v.push(format!("noise must be >= 0 (got {})", self.noise));
        }
        match self.kind {
            SynthKind::NarrowCorridor { gap_min, gap_max, stairs } => {
                if !(gap_min > 0.0) {
                    v.push(format!("gap_min must be positive (got {gap_min})"));
                }
                if gap_min >= gap_max {
                    v.push(format!("gap_min ({gap_min}) must be smaller than gap_max ({gap_max})"));
                }
                if stairs == 0 {
                    v.push("stairs must be positive".into());
                }
                if (gap_min + gap_max) / SQRT_2 >= 1.0 {
                    v.push(format!("gap_min + gap_max must stay below √2 to fit the unit square (got {})", gap_min + gap_max));
                }
            }
            SynthKind::Lms5 {
                m_lin,
                m_slab,
                slab_width,
                x_extent,
            } => {
                if !(m_lin > 0.0 && slab_width > 0.0) {
                    v.push("m_lin and slab_width must be positive".into());
                }
                if m_slab <= m_lin {
                    v.push(format!("m_slab ({m_slab}) must exceed m_lin ({m_lin})"));
                }
                if x_extent <= m_lin {
                    v.push(format!("x_extent ({x_extent}) must exceed m_lin ({m_lin})"));
                }
            }
            SynthKind::TwoDistance {
                eps1,
                eps2,
                cluster_length,
                region_gap,
            } => {
                if !(eps1 > 0.0 && eps2 > 0.0 && cluster_length > 0.0 && region_gap > 0.0) {
                    v.push("two-distance gaps and lengths must be positive".into());
                }
            }
            SynthKind::Gauss1d { mu1, mu2, sigma } => {
                if mu1 >= mu2 {
                    v.push(format!("mu1 ({mu1}) must be smaller than mu2 ({mu2})"));
                }
                if !(sigma >= 0.0) {
                    v.push(format!("sigma must be >= 0 (got {sigma})"));
                }
            }
        }
        v
    }
}

/// One generated Narrow Corridor sample with its corridor coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorPoint {
    pub point: [f64; 2],
    pub label: usize,
    /// Position along the corridor in `[0, 1]`.
    pub position: f64,
    /// Distance to the mirror-image point on the other chain.
    pub gap: f64,
}

fn jitter(noise: f64) -> Normal<f64> {
    Normal::new(0.0, noise.max(0.0)).expect("finite noise")
}

/// Label implied by the generating midline `y = x`: class 0 lies above it.
pub fn corridor_side(point: &[f64]) -> usize {
    if point[1] > point[0] {
        0
    } else {
        1
    }
}

/// Vertices of the class-0 chain: closest corners `A_k` interleaved with the
/// outer corners `(A_k.x, A_{k+1}.y)`. The class-1 chain is its mirror image.
fn corridor_vertices(gap_min: f64, gap_max: f64, stairs: usize) -> Vec<[f64; 2]> {
    let lo = gap_min / (2.0 * SQRT_2);
    let hi = 1.0 - gap_max / (2.0 * SQRT_2);
    let corner = |k: usize| {
        let t = k as f64 / stairs as f64;
        let u = lo + (hi - lo) * t;
        let off = (gap_min + (gap_max - gap_min) * t) / (2.0 * SQRT_2);
        [u - off, u + off]
    };
    let mut v = vec![corner(0)];
    for k in 0..stairs {
        let (a, b) = (corner(k), corner(k + 1));
        v.push([a[0], b[1]]);
        v.push(b);
    }
    v
}

/// Samples spaced evenly (with jitter) by arc length along both chains.
pub fn narrow_corridor_layout(spec: &SynthSpec) -> Result<Vec<CorridorPoint>> {
    let SynthKind::NarrowCorridor { gap_min, gap_max, stairs } = spec.kind else {
        return Err(Error::config("narrow_corridor_layout needs a narrow-corridor spec"));
    };
    reject(spec)?;
    let mut rng = seed::stream(seed::derive_named(spec.seed, "narrow-corridor", &[]));
    let noise = jitter(spec.noise);
    let verts = corridor_vertices(gap_min, gap_max, stairs);
    let lengths: Vec<f64> = verts.windows(2).map(|w| (w[1][0] - w[0][0]).abs() + (w[1][1] - w[0][1]).abs()).collect();
    let total: f64 = lengths.iter().sum();
    let n = spec.points_per_cluster;
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let f = (f + rng.random_range(-0.25..0.25) / n as f64).clamp(0.0, 1.0);
        let mut s = f * total;
        let mut seg = 0;
        while seg + 1 < lengths.len() && s > lengths[seg] {
            s -= lengths[seg];
            seg += 1;
        }
        let (a, b) = (verts[seg], verts[seg + 1]);
        let r = if lengths[seg] > 0.0 { (s / lengths[seg]).min(1.0) } else { 0.0 };
        let p = [a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1])];
        let gap = (p[1] - p[0]) * SQRT_2;
        for (label, q) in [(0, p), (1, [p[1], p[0]])] {
            out.push(CorridorPoint {
                point: [q[0] + noise.sample(&mut rng), q[1] + noise.sample(&mut rng)],
                label,
                position: f,
                gap,
            });
        }
    }
    Ok(out)
}

pub fn gen_narrow_corridor(spec: &SynthSpec) -> Result<LabeledSet> {
    let layout = narrow_corridor_layout(spec)?;
    let labels = layout.iter().map(|p| p.label).collect();
    let points = layout.into_iter().map(|p| p.point.to_vec()).collect();
    LabeledSet::from_points(points, labels, 2)
}

/// Centre of slab `j ∈ 0..5` on the second coordinate.
pub fn lms5_slab_center(j: usize, m_slab: f64, slab_width: f64) -> f64 {
    (j as f64 - 2.0) * (slab_width + m_slab)
}

pub fn gen_lms5(spec: &SynthSpec) -> Result<LabeledSet> {
    let SynthKind::Lms5 {
        m_lin,
        m_slab,
        slab_width,
        x_extent,
    } = spec.kind
    else {
        return Err(Error::config("gen_lms5 needs an lms5 spec"));
    };
    reject(spec)?;
    let mut rng = seed::stream(seed::derive_named(spec.seed, "lms5", &[]));
    let noise = jitter(spec.noise);
    let n = spec.points_per_cluster;
    let mut points = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for label in 0..2usize {
        let slabs: &[usize] = if label == 0 { &[0, 2, 4] } else { &[1, 3] };
        let side = if label == 0 { -1.0 } else { 1.0 };
        for i in 0..n {
            let slab = slabs[i % slabs.len()];
            let x = side * rng.random_range(m_lin..=x_extent);
            let y = lms5_slab_center(slab, m_slab, slab_width) + rng.random_range(-0.5..=0.5) * slab_width;
            points.push(vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
            labels.push(label);
        }
    }
    LabeledSet::from_points(points, labels, 2)
}

pub fn gen_two_distance(spec: &SynthSpec) -> Result<LabeledSet> {
    let SynthKind::TwoDistance {
        eps1,
        eps2,
        cluster_length,
        region_gap,
    } = spec.kind
    else {
        return Err(Error::config("gen_two_distance needs a two-distance spec"));
    };
    reject(spec)?;
    let mut rng = seed::stream(seed::derive_named(spec.seed, "two-distance", &[]));
    let noise = jitter(spec.noise);
    let n = spec.points_per_cluster;
    let mut points = Vec::with_capacity(4 * n);
    let mut labels = Vec::with_capacity(4 * n);
    for (region, gap) in [eps1, eps2].into_iter().enumerate() {
        let y0 = region as f64 * (cluster_length + region_gap);
        for i in 0..n {
            let y = y0 + cluster_length * (i as f64 + 0.5 + rng.random_range(-0.25..0.25)) / n as f64;
            for (label, x) in [(0, -gap / 2.0), (1, gap / 2.0)] {
                points.push(vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
                labels.push(label);
            }
        }
    }
    LabeledSet::from_points(points, labels, 2)
}

pub fn gen_gauss1d(spec: &SynthSpec) -> Result<LabeledSet> {
    let SynthKind::Gauss1d { mu1, mu2, sigma } = spec.kind else {
        return Err(Error::config("gen_gauss1d needs a gauss1d spec"));
    };
    reject(spec)?;
    let mut rng = seed::stream(seed::derive_named(spec.seed, "gauss1d", &[]));
    let dist = Normal::new(0.0, sigma).expect("finite sigma");
    let n = spec.points_per_cluster;
    let mut points = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for (label, mu) in [(0, mu1), (1, mu2)] {
        for _ in 0..n {
            points.push(vec![mu + dist.sample(&mut rng)]);
            labels.push(label);
        }
    }
    LabeledSet::from_points(points, labels, 2)
}

fn reject(spec: &SynthSpec) -> Result<()> {
    let v = spec.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::config(v.join("; ")))
    }
}

/// Dispatches on the generator kind.
pub fn generate(spec: &SynthSpec) -> Result<LabeledSet> {
    match spec.kind {
        SynthKind::NarrowCorridor { .. } => gen_narrow_corridor(spec),
        SynthKind::Lms5 { .. } => gen_lms5(spec),
        SynthKind::TwoDistance { .. } => gen_two_distance(spec),
        SynthKind::Gauss1d { .. } => gen_gauss1d(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::nearest_opposite_distances;

    #[test]
    fn generators_are_deterministic() {
        let gauss = SynthKind::Gauss1d { mu1: -1.0, mu2: 1.0, sigma: 0.5 };
        for kind in [SynthKind::narrow_corridor(), SynthKind::lms5(), SynthKind::two_distance(), gauss] {
            let spec = SynthSpec::new(kind, 17).with_noise(0.001);
            assert!(generate(&spec).unwrap() == generate(&spec).unwrap());
            assert!(generate(&spec).unwrap() != generate(&SynthSpec { seed: 18, ..spec }).unwrap());
        }
    }

    #[test]
    fn corridor_midline_certificate() {
        for seed in 0..5 {
            let set = gen_narrow_corridor(&SynthSpec::new(SynthKind::narrow_corridor(), seed)).unwrap();
            for (p, y) in set.iter() {
                assert_eq!(corridor_side(p), y, "point {p:?}");
                assert!(p.iter().all(|c| (0.0..=1.0).contains(c)), "point {p:?} outside the unit square");
            }
        }
    }

    #[test]
    fn corridor_gap_range_and_monotone_envelope() {
        let spec = SynthSpec::new(SynthKind::narrow_corridor(), 5).with_points(400);
        let layout = narrow_corridor_layout(&spec).unwrap();
        let d = nearest_opposite_distances(&gen_narrow_corridor(&spec).unwrap()).unwrap();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(0.0, f64::max);
        assert!((lo - 0.1).abs() < 0.01, "min gap {lo}");
        let SynthKind::NarrowCorridor { stairs, .. } = spec.kind else { unreachable!() };
        // The last corner sees the neighbouring run of the other chain slightly
        // closer than its mirror image; outer corners sit up to a stair further out.
        let stair = (1.0 - 1.0 / SQRT_2) / stairs as f64 * SQRT_2;
        assert!(hi >= 0.8 && hi <= 0.9 + stair, "max gap {hi}");
        // Closest approach per stair never shrinks along the corridor.
        let mut per_stair = vec![f64::INFINITY; stairs];
        for (p, &di) in layout.iter().zip(&d) {
            let k = ((p.position * stairs as f64) as usize).min(stairs - 1);
            per_stair[k] = per_stair[k].min(di);
        }
        assert!(per_stair.windows(2).all(|w| w[0] <= w[1] + 1e-3), "{per_stair:?}");
    }

    #[test]
    fn corridor_rejects_inverted_gaps() {
        let spec = SynthSpec::new(
            SynthKind::NarrowCorridor {
                gap_min: 0.5,
                gap_max: 0.2,
                stairs: 4,
            },
            0,
        );
        assert!(matches!(gen_narrow_corridor(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn lms5_balance_and_gap_ordering() {
        let set = gen_lms5(&SynthSpec::new(SynthKind::lms5(), 1)).unwrap();
        let zeros = set.labels().iter().filter(|&&y| y == 0).count();
        assert_eq!(zeros * 2, set.len());
        let bad = SynthSpec::new(
            SynthKind::Lms5 {
                m_lin: 0.3,
                m_slab: 0.2,
                slab_width: 0.1,
                x_extent: 1.0,
            },
            0,
        );
        assert!(gen_lms5(&bad).is_err());
    }

    #[test]
    fn gauss_needs_ordered_means_and_collapses_at_zero_sigma() {
        let bad = SynthSpec::new(SynthKind::Gauss1d { mu1: 1.0, mu2: 0.0, sigma: 1.0 }, 0);
        assert!(gen_gauss1d(&bad).is_err());
        let set = gen_gauss1d(&SynthSpec::new(SynthKind::gauss1d(), 0).with_points(10)).unwrap();
        for (p, y) in set.iter() {
            assert_eq!(p[0], if y == 0 { -1.0 } else { 1.0 });
        }
    }
}
