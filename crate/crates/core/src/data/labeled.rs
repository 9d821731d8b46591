use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `N × d` samples with class labels in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    samples: Matrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledSet {
    pub fn new(samples: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::config("a dataset needs at least one sample"));
        }
        if samples.rows() != labels.len() {
            return Err(Error::config(format!(
                "{} samples but {} labels",
                samples.rows(),
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
            return Err(Error::config(format!(
                "label {y} of sample {i} is outside 0..{class_count}"
            )));
        }
        if samples.as_slice().iter().any(|v| v.is_nan()) {
            return Err(Error::config("samples contain NaN"));
        }
        Ok(Self {
            samples,
            labels,
            class_count,
        })
    }

    pub fn from_points(points: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("a dataset needs at least one sample"));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::config("samples have different dimensions"));
        }
        Self::new(Matrix::from_rows(&points), labels, class_count)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.samples.iter_rows().zip(self.labels.iter().copied())
    }

    /// Number of distinct labels actually present.
    pub fn classes_present(&self) -> usize {
        let mut seen = vec![false; self.class_count];
        for &y in &self.labels {
            seen[y] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points: Vec<Vec<f64>> = indices.iter().map(|&i| self.point(i).to_vec()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::from_points(points, labels, self.class_count)
    }

    /// Seeded subsample without replacement; keeps at least one sample.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("subsample fraction must be in (0, 1], got {fraction}")));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let keep = ((self.len() as f64 * fraction).round() as usize).max(1);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut crate::seed::stream(seed));
        idx.truncate(keep);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// CSV with header `x_0,...,x_{d-1},label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim() {
            let _ = write!(out, "x_{j},");
        }
        out.push_str("label\n");
        for (p, y) in self.iter() {
            for v in p {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. `class_count` defaults to `max label + 1`.
    pub fn from_csv(text: &str, class_count: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::config("empty CSV"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.last() != Some(&"label") {
            return Err(Error::config("CSV header must end with `label`"));
        }
        let d = cols.len() - 1;
        for (j, c) in cols[..d].iter().enumerate() {
            if *c != format!("x_{j}") {
                return Err(Error::config(format!("unexpected CSV column `{c}` at position {j}")));
            }
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(Error::config(format!("CSV row {} has {} fields, expected {}", n + 1, fields.len(), d + 1)));
            }
            let p = fields[..d]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::config(format!("CSV row {}: {e}", n + 1)))?;
            let y = fields[d]
                .parse::<usize>()
                .map_err(|e| Error::config(format!("CSV row {} label: {e}", n + 1)))?;
            points.push(p);
            labels.push(y);
        }
        let c = class_count.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::from_points(points, labels, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledSet {
        LabeledSet::from_points(vec![vec![0.0, 1.5], vec![-2.25, 3.0], vec![1.0, 1.0]], vec![0, 1, 1], 2).unwrap()
    }

    #[test]
    fn invariants_enforced() {
        assert!(LabeledSet::from_points(vec![vec![0.0]], vec![2], 2).is_err());
        assert!(LabeledSet::from_points(vec![], vec![], 2).is_err());
        assert!(LabeledSet::from_points(vec![vec![f64::NAN]], vec![0], 2).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = tiny();
        let text = s.to_csv();
        assert!(text.starts_with("x_0,x_1,label\n"));
        assert_eq!(LabeledSet::from_csv(&text, Some(2)).unwrap(), s);
    }

    #[test]
    fn subsample_identity_and_size() {
        let s = tiny();
        assert_eq!(s.subsample(1.0, 3).unwrap(), s);
        assert_eq!(s.subsample(0.34, 3).unwrap().len(), 1);
        assert_eq!(s.subsample(0.34, 3).unwrap(), s.subsample(0.34, 3).unwrap());
        assert!(s.subsample(0.0, 3).is_err());
    }
}
