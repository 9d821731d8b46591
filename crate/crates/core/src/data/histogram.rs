use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::distance2;

use super::LabeledSet;

/// Equal-width histogram with `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Per-sample distance to the nearest sample of another class.
    pub distances: Vec<f64>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

/// `d_i = min_{j: y_j ≠ y_i} ‖x_i − x_j‖₂` for every sample.
pub fn nearest_opposite_distances(data: &LabeledSet) -> Result<Vec<f64>> {
    if data.classes_present() < 2 {
        return Err(Error::domain("nearest opposite-class distance needs at least two classes"));
    }
    Ok(exec::map_indexed(data.len(), |i| {
        let (xi, yi) = (data.point(i), data.label(i));
        data.iter()
            .filter(|&(_, y)| y != yi)
            .map(|(xj, _)| distance2(xi, xj))
            .fold(f64::INFINITY, f64::min)
    }))
}

/// Histogram of nearest opposite-class distances over `bins` equal-width bins.
pub fn opposite_class_histogram(data: &LabeledSet, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let distances = nearest_opposite_distances(data)?;
    let lo = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
    let mut counts = vec![0; bins];
    for &d in &distances {
        let b = (((d - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_example() {
        let d = LabeledSet::from_points(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0]], vec![1, 0, 1], 2).unwrap();
        assert_eq!(nearest_opposite_distances(&d).unwrap(), vec![1.0, 1.0, 4.0]);
        let h = opposite_class_histogram(&d, 3).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(h.counts, vec![2, 0, 1]);
    }

    #[test]
    fn coincident_points_have_zero_distance() {
        let d = LabeledSet::from_points(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0, 1], 2).unwrap();
        assert_eq!(nearest_opposite_distances(&d).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_class_is_domain_error() {
        let d = LabeledSet::from_points(vec![vec![0.0], vec![1.0]], vec![1, 1], 2).unwrap();
        assert!(matches!(opposite_class_histogram(&d, 4), Err(Error::Domain(_))));
    }
}
