//! Geometry and robustness diagnostics: margins, grid maps, oscillation
//! counts, robust accuracy and crossing rates.

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};

use crate::data::LabeledSet;
use crate::error::{check_dim, Error, Result};
use crate::exec::try_map_indexed;
use crate::linalg::{argmax, norm2};
use crate::nnet::{entropy_of, Entry};
use crate::perturb::{perturb, predict_displaced, Method, PerturbSpec};
use crate::seed;
use crate::uncertainty::Ensemble;

/// Radial-bisection parameters for [`margin_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSearch {
    /// Random unit directions probed per point.
    pub directions: usize,
    /// Also probe along the normalised entropy gradient.
    pub entropy_direction: bool,
    /// Search radius; points with no flip inside it are censored at this value.
    pub max_radius: f64,
    /// Coarse scan step along each ray before bisection.
    pub scan_step: f64,
    /// Bisection stops when the bracket is narrower than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MarginSearch {
    fn default() -> Self {
        Self {
            directions: 64,
            entropy_direction: true,
            max_radius: 2.0,
            scan_step: 5e-3,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl MarginSearch {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.directions == 0 && !self.entropy_direction {
            v.push("margin search needs at least one direction".to_string());
        }
        if !(self.max_radius > 0.0 && self.max_radius.is_finite()) {
            v.push(format!("max_radius must be positive and finite, got {}", self.max_radius));
        }
        if !(self.scan_step > 0.0) {
            v.push(format!("scan_step must be positive, got {}", self.scan_step));
        }
        if !(self.tolerance > 0.0) {
            v.push(format!("tolerance must be positive, got {}", self.tolerance));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMargin {
    pub margin: f64,
    /// No flip found within `max_radius`; `margin == max_radius`.
    pub censored: bool,
}

fn ray_point(x: &[f64], u: &[f64], r: f64) -> Vec<f64> {
    x.iter().zip(u).map(|(a, b)| a + r * b).collect()
}

/// Distance to the first prediction flip along `u`, searched up to `limit`.
fn ray_flip(ens: &Ensemble, x: &[f64], u: &[f64], class: usize, limit: f64, search: &MarginSearch) -> Result<Option<f64>> {
    let mut lo = 0.0;
    let mut hi = None;
    let mut r = 0.0;
    while r < limit {
        let next = (r + search.scan_step).min(limit);
        if ens.predict(&ray_point(x, u, next))? != class {
            hi = Some(next);
            break;
        }
        lo = next;
        r = next;
    }
    let Some(mut hi) = hi else { return Ok(None) };
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        if ens.predict(&ray_point(x, u, mid))? != class {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::stream(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            out.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    out
}

/// Estimated L2 distance from `x` to the nearest prediction flip (an upper bound
/// on the true margin).
pub fn margin_point(ens: &Ensemble, x: &[f64], search: &MarginSearch) -> Result<PointMargin> {
    let v = search.violations();
    if !v.is_empty() {
        return Err(Error::config(v.join("; ")));
    }
    check_dim("margin point", ens.input_dim(), x.len())?;
    let class = ens.predict(x)?;
    let mut dirs = Vec::with_capacity(search.directions + 1);
    if search.entropy_direction {
        let g = ens.entropy_input_grad(x, Entry::Input)?;
        let n = norm2(&g);
        if n > 0.0 && n.is_finite() {
            dirs.push(g.iter().map(|a| a / n).collect::<Vec<_>>());
        }
    }
    dirs.extend(unit_directions(x.len(), search.directions, search.seed));
    // Each ray only needs scanning up to the best margin found so far.
    let mut best: Option<f64> = None;
    for u in &dirs {
        let limit = best.unwrap_or(search.max_radius);
        if let Some(r) = ray_flip(ens, x, u, class, limit, search)? {
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
    }
    Ok(match best {
        Some(m) => PointMargin { margin: m, censored: false },
        None => PointMargin {
            margin: search.max_radius,
            censored: true,
        },
    })
}

/// Per-point margins plus both dataset aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub margins: Vec<f64>,
    pub censored: Vec<bool>,
    pub misclassified: Vec<bool>,
    pub min_margin: f64,
    pub max_margin: f64,
    /// Index of the point attaining `min_margin`.
    pub binding_index: usize,
}

impl MarginReport {
    pub fn misclassified_count(&self) -> usize {
        self.misclassified.iter().filter(|&&m| m).count()
    }

    /// Header `index,margin,censored,misclassified`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,margin,censored,misclassified\n");
        for i in 0..self.margins.len() {
            let _ = writeln!(
                s,
                "{i},{},{},{}",
                self.margins[i], self.censored[i] as u8, self.misclassified[i] as u8
            );
        }
        s
    }
}

/// Margins of every point; misclassified points get margin 0 and are flagged.
/// Direction seeds are derived per point index.
pub fn margin_dataset(ens: &Ensemble, data: &LabeledSet, search: &MarginSearch) -> Result<MarginReport> {
    if data.is_empty() {
        return Err(Error::config("margin_dataset on an empty dataset"));
    }
    let rows = try_map_indexed(data.len(), |i| -> Result<(f64, bool, bool)> {
        let x = data.point(i);
        if ens.predict(x)? != data.label(i) {
            return Ok((0.0, false, true));
        }
        let s = MarginSearch {
            seed: seed::derive(search.seed, &[i as u64]),
            ..*search
        };
        let m = margin_point(ens, x, &s)?;
        Ok((m.margin, m.censored, false))
    })?;
    let margins: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut binding_index = 0;
    for (i, &m) in margins.iter().enumerate() {
        if m < margins[binding_index] {
            binding_index = i;
        }
    }
    Ok(MarginReport {
        min_margin: margins[binding_index],
        max_margin: margins.iter().copied().fold(0.0, f64::max),
        binding_index,
        censored: rows.iter().map(|r| r.1).collect(),
        misclassified: rows.iter().map(|r| r.2).collect(),
        margins,
    })
}

/// Axis-aligned 2D lattice of cell centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRange {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl GridRange {
    pub fn new(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        let r = Self { x, y, nx, ny };
        let v = r.violations();
        if v.is_empty() {
            Ok(r)
        } else {
            Err(Error::config(v.join("; ")))
        }
    }

    /// Bounding box of a 2D dataset padded by `pad` on every side.
    pub fn around(data: &LabeledSet, pad: f64, nx: usize, ny: usize) -> Result<Self> {
        check_dim("grid dataset", 2, data.dim())?;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (p, _) in data.iter() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Self::new((lo[0] - pad, hi[0] + pad), (lo[1] - pad, hi[1] + pad), nx, ny)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.nx < 2 || self.ny < 2 {
            v.push(format!("grid resolution must be >= 2 per axis, got {}x{}", self.nx, self.ny));
        }
        for (name, (lo, hi)) in [("x", self.x), ("y", self.y)] {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                v.push(format!("grid {name} range must satisfy lo < hi, got ({lo}, {hi})"));
            }
        }
        v
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_width(&self) -> f64 {
        (self.x.1 - self.x.0) / self.nx as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.y.1 - self.y.0) / self.ny as f64
    }

    /// Centre of cell `index` (row-major, `y` outer).
    pub fn center(&self, index: usize) -> [f64; 2] {
        let (i, j) = (index % self.nx, index / self.nx);
        [
            self.x.0 + (i as f64 + 0.5) * self.cell_width(),
            self.y.0 + (j as f64 + 0.5) * self.cell_height(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub class: usize,
    /// Probability of class 1 (0 for single-class models).
    pub prob1: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub range: GridRange,
    pub cells: Vec<GridCell>,
}

impl GridMap {
    /// Header `x,y,class,prob1,entropy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,class,prob1,entropy\n");
        for (k, c) in self.cells.iter().enumerate() {
            let [x, y] = self.range.center(k);
            let _ = writeln!(s, "{x},{y},{},{},{}", c.class, c.prob1, c.entropy);
        }
        s
    }

    pub fn classes(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.class).collect()
    }

    /// Cells whose class differs from their right or upper neighbour.
    pub fn boundary_cells(&self) -> Vec<usize> {
        let GridRange { nx, ny, .. } = self.range;
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let c = self.cells[k].class;
                let right = i + 1 < nx && self.cells[k + 1].class != c;
                let up = j + 1 < ny && self.cells[k + nx].class != c;
                if right || up {
                    out.push(k);
                }
            }
        }
        out
    }

    /// Fraction of boundary cells within `band` (in x) of the median boundary
    /// column: 1.0 for a vertical boundary. `None` when there is no boundary.
    pub fn vertical_fraction(&self, band: f64) -> Option<f64> {
        let cells = self.boundary_cells();
        if cells.is_empty() {
            return None;
        }
        let mut xs: Vec<f64> = cells.iter().map(|&k| self.range.center(k)[0]).collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        let hit = xs.iter().filter(|&&x| (x - median).abs() <= band).count();
        Some(hit as f64 / xs.len() as f64)
    }
}

/// Evaluates prediction, class-1 probability and entropy at every cell centre.
pub fn grid_map(ens: &Ensemble, range: &GridRange) -> Result<GridMap> {
    if ens.input_dim() != 2 {
        return Err(Error::domain(format!("grid_map needs a 2D model, input dim is {}", ens.input_dim())));
    }
    let v = range.violations();
    if !v.is_empty() {
        return Err(Error::config(v.join("; ")));
    }
    let cells = try_map_indexed(range.cells(), |k| -> Result<GridCell> {
        let p = ens.avg_prediction(&range.center(k))?;
        Ok(GridCell {
            class: argmax(&p),
            prob1: p.get(1).copied().unwrap_or(0.0),
            entropy: entropy_of(&p),
        })
    })?;
    Ok(GridMap { range: *range, cells })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationMap {
    pub range: GridRange,
    pub counts: Vec<usize>,
    pub checkpoints: usize,
}

impl OscillationMap {
    /// Sum of all cell counts.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Header `x,y,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let [x, y] = self.range.center(k);
            let _ = writeln!(s, "{x},{y},{c}");
        }
        s
    }
}

/// Per-cell count of prediction changes between consecutive checkpoints.
pub fn oscillation_map(checkpoints: &[Ensemble], range: &GridRange) -> Result<OscillationMap> {
    if checkpoints.len() < 2 {
        return Err(Error::config(format!(
            "oscillation_map needs at least 2 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    let maps = checkpoints
        .iter()
        .map(|e| grid_map(e, range).map(|m| m.classes()))
        .collect::<Result<Vec<_>>>()?;
    let counts = (0..range.cells())
        .map(|k| maps.windows(2).filter(|w| w[0][k] != w[1][k]).count())
        .collect();
    Ok(OscillationMap {
        range: *range,
        counts,
        checkpoints: checkpoints.len(),
    })
}

/// Fraction of points classified correctly at both `x` and `x + δ`, with `δ`
/// from `attack` (fgsm or ldp-pgd) against the frozen model. Per-point RNG
/// streams derive from `seed`.
pub fn robust_accuracy(ens: &Ensemble, data: &LabeledSet, attack: &PerturbSpec, seed: u64) -> Result<f64> {
    if !matches!(attack.method, Method::Fgsm | Method::LdpPgd) {
        return Err(Error::config(format!(
            "robust accuracy attack must be fgsm or ldp-pgd, got {}",
            attack.method.name()
        )));
    }
    attack.validate()?;
    if data.is_empty() {
        return Err(Error::config("robust_accuracy on an empty dataset"));
    }
    let ok = try_map_indexed(data.len(), |i| -> Result<bool> {
        let (x, y) = (data.point(i), data.label(i));
        if ens.predict(x)? != y {
            return Ok(false);
        }
        if attack.epsilon == 0.0 {
            return Ok(true);
        }
        let mut rng = seed::stream(seed::derive(seed, &[i as u64]));
        let r = perturb(ens, x, Some(y), attack, &mut rng)?;
        Ok(predict_displaced(ens, x, &r.delta, attack.entry)? == y)
    })?;
    Ok(ok.iter().filter(|&&b| b).count() as f64 / data.len() as f64)
}

/// Clean accuracy of `ens` on `data`.
pub fn accuracy(ens: &Ensemble, data: &LabeledSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("accuracy on an empty dataset"));
    }
    let ok = try_map_indexed(data.len(), |i| ens.predict(data.point(i)).map(|c| c == data.label(i)))?;
    Ok(ok.iter().filter(|&&b| b).count() as f64 / data.len() as f64)
}

/// Fraction of points whose perturbed prediction differs from the clean one.
pub fn crossing_rate(ens: &Ensemble, data: &LabeledSet, spec: &PerturbSpec, seed: u64) -> Result<f64> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::config("crossing_rate on an empty dataset"));
    }
    let crossed = try_map_indexed(data.len(), |i| -> Result<bool> {
        let mut rng = seed::stream(seed::derive(seed, &[i as u64]));
        Ok(perturb(ens, data.point(i), Some(data.label(i)), spec, &mut rng)?.crossed_boundary)
    })?;
    Ok(crossed.iter().filter(|&&b| b).count() as f64 / data.len() as f64)
}

/// Colour ramps for [`svg_heatmap`].
///
/// * `Diverging`: blue `#2166ac` at 0, white at 0.5, red `#b2182b` at 1.
///   Used for class-1 probability.
/// * `Sequential`: white at 0 to dark purple `#3f007d` at 1. Used for entropy
///   and oscillation counts.
///
/// Values are normalised to `[0, 1]` by the `(vmin, vmax)` passed to the
/// renderer and interpolated linearly in RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ramp {
    Diverging,
    Sequential,
}

impl Ramp {
    pub fn color(self, t: f64) -> [u8; 3] {
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
        let mix = |a: [f64; 3], b: [f64; 3], s: f64| {
            [0, 1, 2].map(|k| (a[k] + (b[k] - a[k]) * s).round() as u8)
        };
        const WHITE: [f64; 3] = [255.0, 255.0, 255.0];
        match self {
            Ramp::Diverging if t < 0.5 => mix([33.0, 102.0, 172.0], WHITE, 2.0 * t),
            Ramp::Diverging => mix(WHITE, [178.0, 24.0, 43.0], 2.0 * t - 1.0),
            Ramp::Sequential => mix(WHITE, [63.0, 0.0, 125.0], t),
        }
    }
}

const SVG_SIZE: f64 = 400.0;

/// Renders per-cell `values` as an SVG heatmap, optionally overlaying a 2D
/// dataset as points (class 0 hollow circles, class 1 filled).
pub fn svg_heatmap(
    range: &GridRange,
    values: &[f64],
    (vmin, vmax): (f64, f64),
    ramp: Ramp,
    points: Option<&LabeledSet>,
) -> Result<String> {
    check_dim("heatmap values", range.cells(), values.len())?;
    let sx = SVG_SIZE / (range.x.1 - range.x.0);
    let sy = SVG_SIZE / (range.y.1 - range.y.0);
    let px = |x: f64| (x - range.x.0) * sx;
    let py = |y: f64| SVG_SIZE - (y - range.y.0) * sy;
    let (w, h) = (range.cell_width() * sx, range.cell_height() * sy);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\" shape-rendering=\"crispEdges\">\n"
    );
    for (k, &v) in values.iter().enumerate() {
        let [cx, cy] = range.center(k);
        let [r, g, b] = ramp.color((v - vmin) / span);
        let _ = writeln!(
            s,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"#{r:02x}{g:02x}{b:02x}\"/>",
            px(cx) - w / 2.0,
            py(cy) - h / 2.0,
            w,
            h
        );
    }
    if let Some(data) = points {
        check_dim("overlay points", 2, data.dim())?;
        for (p, y) in data.iter() {
            let fill = if y == 0 { "none" } else { "black" };
            let _ = writeln!(
                s,
                "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2.5\" fill=\"{fill}\" stroke=\"black\" stroke-width=\"0.8\"/>",
                px(p[0]),
                py(p[1])
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nnet::{Activation, Layer, MlpModel};

    /// Logits `(0, w·x + b)`: class 1 iff `w·x + b > 0`.
    fn linear(w: &[f64], b: f64) -> Ensemble {
        let d = w.len();
        let mut weights = Matrix::zeros(2, d);
        weights.row_mut(1).copy_from_slice(w);
        let layer = Layer {
            weights,
            bias: vec![0.0, b],
        };
        Ensemble::single(MlpModel::from_layers(vec![layer], Activation::Identity, 0).unwrap())
    }

    fn constant(class: usize) -> Ensemble {
        linear(&[0.0, 0.0], if class == 1 { 1.0 } else { -1.0 })
    }

    #[test]
    fn linear_margin_matches_closed_form() {
        let ens = linear(&[1.0, 0.0], 0.0);
        let m = margin_point(&ens, &[2.0, 0.0], &MarginSearch::default()).unwrap();
        assert!((m.margin - 2.0).abs() < 1e-3, "{m:?}");
        assert!(!m.censored);
    }

    #[test]
    fn point_near_boundary_has_zero_margin() {
        let ens = linear(&[1.0, 1.0], 0.0);
        let m = margin_point(&ens, &[1e-6, 0.0], &MarginSearch::default()).unwrap();
        assert!(m.margin < 2e-4, "{m:?}");
    }

    #[test]
    fn censored_without_flip() {
        let m = margin_point(&constant(1), &[0.0, 0.0], &MarginSearch::default()).unwrap();
        assert!(m.censored);
        assert_eq!(m.margin, 2.0);
    }

    #[test]
    fn symmetric_pair_min_equals_max() {
        let ens = linear(&[0.0, 1.0], 0.0);
        let data = LabeledSet::from_points(vec![vec![0.3, -0.5], vec![-0.7, 0.5]], vec![0, 1], 2).unwrap();
        let r = margin_dataset(&ens, &data, &MarginSearch::default()).unwrap();
        assert!((r.min_margin - 0.5).abs() < 1e-3 && (r.max_margin - 0.5).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn misclassified_points_flagged_with_zero_margin() {
        let ens = linear(&[1.0, 0.0], 0.0);
        let data = LabeledSet::from_points(vec![vec![1.0, 0.0], vec![2.0, 0.0]], vec![1, 0], 2).unwrap();
        let r = margin_dataset(&ens, &data, &MarginSearch::default()).unwrap();
        assert_eq!(r.margins[1], 0.0);
        assert_eq!(r.misclassified, vec![false, true]);
        assert_eq!(r.binding_index, 1);
        assert_eq!(r.min_margin, 0.0);
    }

    #[test]
    fn more_directions_never_increase_margin() {
        let ens = linear(&[0.3, -1.2], 0.1);
        let base = MarginSearch {
            entropy_direction: false,
            directions: 4,
            ..MarginSearch::default()
        };
        let few = margin_point(&ens, &[0.5, -0.4], &base).unwrap().margin;
        let many = margin_point(&ens, &[0.5, -0.4], &MarginSearch { directions: 64, ..base }).unwrap().margin;
        assert!(many <= few + 1e-12);
    }

    #[test]
    fn grid_rejects_non_2d_and_tiny_resolution() {
        let r = GridRange::new((0.0, 1.0), (0.0, 1.0), 4, 4).unwrap();
        assert!(matches!(grid_map(&linear(&[1.0], 0.0), &r), Err(Error::Domain(_))));
        assert!(GridRange::new((0.0, 1.0), (0.0, 1.0), 1, 4).is_err());
    }

    #[test]
    fn grid_constant_and_linear_split() {
        let r = GridRange::new((-1.0, 1.0), (-1.0, 1.0), 10, 8).unwrap();
        let m = grid_map(&constant(0), &r).unwrap();
        assert!(m.cells.iter().all(|c| c.class == 0));
        let (w, b) = ([1.0, -0.5], 0.2);
        let m = grid_map(&linear(&w, b), &r).unwrap();
        for (k, c) in m.cells.iter().enumerate() {
            let [x, y] = r.center(k);
            assert_eq!(c.class, (w[0] * x + w[1] * y + b > 0.0) as usize);
        }
    }

    #[test]
    fn grid_entropy_peaks_next_to_boundary() {
        let r = GridRange::new((-1.0, 1.0), (-1.0, 1.0), 20, 5).unwrap();
        let m = grid_map(&linear(&[3.0, 0.0], 0.0), &r).unwrap();
        let best = (0..r.cells()).max_by(|&a, &b| m.cells[a].entropy.total_cmp(&m.cells[b].entropy)).unwrap();
        assert!((r.center(best)[0].abs() - r.cell_width() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_fraction_of_axis_and_diagonal_boundaries() {
        let r = GridRange::new((-1.0, 1.0), (-1.0, 1.0), 40, 40).unwrap();
        let v = grid_map(&linear(&[1.0, 0.0], 0.013), &r).unwrap();
        assert_eq!(v.vertical_fraction(0.06), Some(1.0));
        let d = grid_map(&linear(&[1.0, 1.0], 0.0), &r).unwrap();
        assert!(d.vertical_fraction(0.06).unwrap() < 0.2);
        assert_eq!(grid_map(&constant(1), &r).unwrap().vertical_fraction(0.1), None);
    }

    #[test]
    fn oscillation_counts() {
        let r = GridRange::new((-1.0, 1.0), (-1.0, 1.0), 3, 3).unwrap();
        let (a, b) = (constant(0), constant(1));
        assert!(oscillation_map(&[a.clone(), a.clone()], &r).unwrap().counts.iter().all(|&c| c == 0));
        assert!(oscillation_map(&[a.clone(), b.clone()], &r).unwrap().counts.iter().all(|&c| c == 1));
        let alt = [a.clone(), b.clone(), a.clone(), b.clone(), a.clone()];
        let m = oscillation_map(&alt, &r).unwrap();
        assert!(m.counts.iter().all(|&c| c == 4));
        let mut dup = alt.to_vec();
        dup.push(a.clone());
        assert_eq!(oscillation_map(&dup, &r).unwrap().counts, m.counts);
        assert!(oscillation_map(&[a], &r).is_err());
    }

    #[test]
    fn robust_accuracy_matches_flip_radius() {
        // Class 1 iff x > 0.25; FGSM pushes every correct point by ε toward it.
        let ens = linear(&[2.0], -0.5);
        let xs = [-1.0, -0.3, 0.0, 0.2, 0.3, 0.4, 0.9, 1.5];
        let labels: Vec<usize> = xs.iter().map(|&x| (x > 0.25) as usize).collect();
        let data = LabeledSet::from_points(xs.iter().map(|&x| vec![x]).collect(), labels, 2).unwrap();
        for eps in [0.0, 0.1, 0.3, 0.6] {
            let spec = PerturbSpec::new(Method::Fgsm, eps, eps, 1);
            let expect = xs.iter().filter(|&&x| (x - 0.25).abs() > eps).count() as f64 / xs.len() as f64;
            assert_eq!(robust_accuracy(&ens, &data, &spec, 0).unwrap(), expect, "eps {eps}");
        }
        let clean = accuracy(&ens, &data).unwrap();
        assert_eq!(robust_accuracy(&ens, &data, &PerturbSpec::new(Method::LdpPgd, 0.0, 0.1, 3), 1).unwrap(), clean);
        let udp = PerturbSpec::new(Method::UdpPgd, 0.1, 0.1, 3);
        assert!(robust_accuracy(&ens, &data, &udp, 0).is_err());
    }

    #[test]
    fn crossing_rate_zero_eps_and_full_push() {
        let ens = linear(&[1.0], 0.0);
        let data = LabeledSet::from_points(vec![vec![-0.5], vec![-0.2], vec![0.3], vec![0.6]], vec![0, 0, 1, 1], 2).unwrap();
        let zero = PerturbSpec::new(Method::LdpPgd, 0.0, 0.1, 5);
        assert_eq!(crossing_rate(&ens, &data, &zero, 0).unwrap(), 0.0);
        let big = PerturbSpec::new(Method::LdpPgd, 1.0, 0.25, 8);
        assert_eq!(crossing_rate(&ens, &data, &big, 0).unwrap(), 1.0);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(Ramp::Diverging.color(0.0), [33, 102, 172]);
        assert_eq!(Ramp::Diverging.color(0.5), [255, 255, 255]);
        assert_eq!(Ramp::Diverging.color(1.0), [178, 24, 43]);
        assert_eq!(Ramp::Sequential.color(0.0), [255, 255, 255]);
        assert_eq!(Ramp::Sequential.color(2.0), [63, 0, 125]);
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let r = GridRange::new((0.0, 1.0), (0.0, 1.0), 3, 2).unwrap();
        let svg = svg_heatmap(&r, &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0], (0.0, 1.0), Ramp::Diverging, None).unwrap();
        assert_eq!(svg.matches("<rect").count(), 6);
        assert!(svg_heatmap(&r, &[0.0], (0.0, 1.0), Ramp::Sequential, None).is_err());
    }
}
