//! Rectangles in the unit cube, datasets, and the measures built on them.
//!
//! Point membership follows the recursive-splitting convention: a split at
//! `tau` on axis `j` sends `x_j <= tau` to the lower child and `x_j > tau` to
//! the upper child. A rectangle therefore contains `x` when, on every axis,
//! `lo < x <= hi`, except that a lower bound of exactly `0` is closed. Leaves
//! produced by splitting are then disjoint and cover `[0,1]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when rounding products like `alpha * m` to integers, so that
/// `0.2 * 1000` is treated as exactly 200.
const ROUNDING_SLACK: f64 = 1e-9;

/// `ceil(x)` robust to representation error just above an integer.
pub fn ceil_tol(x: f64) -> usize {
    let c = (x - ROUNDING_SLACK * x.abs().max(1.0)).ceil();
    if c <= 0.0 {
        0
    } else {
        c as usize
    }
}

/// `floor(x)` robust to representation error just below an integer.
pub fn floor_tol(x: f64) -> usize {
    let f = (x + ROUNDING_SLACK * x.abs().max(1.0)).floor();
    if f <= 0.0 {
        0
    } else {
        f as usize
    }
}

/// Smallest child count allowed by the balance parameter for a parent of `m`
/// points. For `alpha < 0.5` this is `ceil(alpha * m)`; the median variant
/// (`alpha = 0.5`) splits at the lower median and needs `floor(m / 2)`.
pub fn min_child_count(alpha: f64, m: usize) -> usize {
    if alpha >= 0.5 {
        m / 2
    } else {
        ceil_tol(alpha * m as f64)
    }
}

/// Axis-aligned box in `[0,1]^d` with positive width on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rectangle {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidRectangle(format!(
                "lo has {} axes but hi has {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.is_empty() {
            return Err(Error::InvalidRectangle("zero-dimensional rectangle".into()));
        }
        for (j, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l < 0.0 || h > 1.0 || l >= h {
                return Err(Error::InvalidRectangle(format!(
                    "axis {j}: need 0 <= lo < hi <= 1, got [{l}, {h}]"
                )));
            }
        }
        Ok(Rectangle { lo, hi })
    }

    /// The full cube `[0,1]^d`.
    pub fn unit(d: usize) -> Self {
        assert!(d >= 1, "unit cube needs d >= 1");
        Rectangle {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, j: usize) -> f64 {
        self.hi[j] - self.lo[j]
    }

    /// Lebesgue measure.
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Axes on which the rectangle is not the full interval `[0,1]`.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| self.lo[j] != 0.0 || self.hi[j] != 1.0)
            .collect()
    }

    /// Point membership under the splitting convention (see module docs).
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        self.lo.iter().zip(&self.hi).zip(x).all(|((&l, &h), &v)| {
            let above = if l == 0.0 { v >= 0.0 } else { v > l };
            above && v <= h
        })
    }

    /// Set containment of closed boxes: `other ⊆ self`.
    pub fn contains_rect(&self, other: &Rectangle) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|j| self.lo[j] <= other.lo[j] && other.hi[j] <= self.hi[j])
    }

    /// Children `{x_j <= tau}` and `{x_j > tau}`.
    pub fn split(&self, axis: usize, tau: f64) -> Result<(Rectangle, Rectangle)> {
        if axis >= self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: axis + 1,
            });
        }
        let (l, h) = (self.lo[axis], self.hi[axis]);
        if !(tau > l && tau < h) {
            return Err(Error::SplitOutsideRegion {
                axis,
                tau,
                lo: l,
                hi: h,
            });
        }
        let mut lower = self.clone();
        lower.hi[axis] = tau;
        let mut upper = self.clone();
        upper.lo[axis] = tau;
        Ok((lower, upper))
    }
}

/// Bound on the feature density, `1/zeta <= f <= zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEnvelope {
    zeta: f64,
}

impl DensityEnvelope {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta >= 1.0 && zeta.is_finite()) {
            return Err(Error::InvalidParams(format!("zeta must be >= 1, got {zeta}")));
        }
        Ok(DensityEnvelope { zeta })
    }

    /// Uniform features.
    pub fn uniform() -> Self {
        DensityEnvelope { zeta: 1.0 }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }
}

impl Default for DensityEnvelope {
    fn default() -> Self {
        Self::uniform()
    }
}

/// `n` feature rows in `[0,1]^d` with responses bounded by `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    m: f64,
}

impl Dataset {
    /// Builds a dataset from row-major features. When `m` is `None` the bound
    /// defaults to `max |y_i|`.
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>, m: Option<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDataset("d must be at least 1".into()));
        }
        if y.is_empty() {
            return Err(Error::InvalidDataset("n must be at least 1".into()));
        }
        if x.len() != d * y.len() {
            return Err(Error::InvalidDataset(format!(
                "expected {} feature values for n = {} and d = {}, got {}",
                d * y.len(),
                y.len(),
                d,
                x.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidDataset(format!(
                "feature at row {}, column {} is {} (outside [0,1])",
                pos / d,
                pos % d,
                x[pos]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("response at row {i} is not finite")));
        }
        let max_abs = y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let m = match m {
            Some(m) => {
                if !(m >= 0.0 && m.is_finite()) {
                    return Err(Error::InvalidDataset(format!("response bound M = {m} is invalid")));
                }
                if max_abs > m {
                    return Err(Error::InvalidDataset(format!(
                        "response {max_abs} exceeds the bound M = {m}"
                    )));
                }
                m
            }
            None => max_abs,
        };
        Ok(Dataset { d, x, y, m })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, m: Option<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDataset("ragged feature rows".into()));
        }
        Self::new(d, rows.concat(), y, m)
    }

    /// Rank-transforms arbitrary real features column by column, then builds
    /// the dataset.
    pub fn from_raw_ranked(d: usize, raw: &[f64], y: Vec<f64>, m: Option<f64>) -> Result<Self> {
        if d == 0 || raw.len() != d * y.len() {
            return Err(Error::InvalidDataset("feature matrix shape does not match responses".into()));
        }
        if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "feature at row {}, column {} is not finite",
                pos / d,
                pos % d
            )));
        }
        Self::new(d, rank_transform_columns(d, raw), y, m)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Response bound `M`.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn feature(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.d + j]
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Number of rows inside `r` under the membership rule.
    pub fn count_points(&self, r: &Rectangle) -> usize {
        (0..self.n()).filter(|&i| r.contains(self.row(i))).count()
    }

    /// Replaces each feature column by `(rank - 0.5) / n`, averaging ranks
    /// over ties.
    pub fn rank_transform(&self) -> Dataset {
        Dataset {
            d: self.d,
            x: rank_transform_columns(self.d, &self.x),
            y: self.y.clone(),
            m: self.m,
        }
    }
}

/// Free-standing form of the count used throughout.
pub fn count_points(r: &Rectangle, data: &Dataset) -> usize {
    data.count_points(r)
}

/// Column-wise `(average rank - 0.5) / n` of a row-major matrix.
pub fn rank_transform_columns(d: usize, x: &[f64]) -> Vec<f64> {
    let n = if d == 0 { 0 } else { x.len() / d };
    let mut out = vec![0.0; x.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        order.sort_by(|&a, &b| x[a * d + j].total_cmp(&x[b * d + j]));
        let mut start = 0;
        while start < n {
            let v = x[order[start] * d + j];
            let mut end = start + 1;
            while end < n && x[order[end] * d + j] == v {
                end += 1;
            }
            // 1-based ranks start+1 ..= end share their average
            let avg_rank = (start + 1 + end) as f64 / 2.0;
            let value = (avg_rank - 0.5) / n as f64;
            for &i in &order[start..end] {
                out[i * d + j] = value;
            }
            start = end;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(lo: &[f64], hi: &[f64]) -> Rectangle {
        Rectangle::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn volume_examples() {
        assert_eq!(Rectangle::unit(3).volume(), 1.0);
        assert_eq!(rect(&[0.0, 0.0], &[0.5, 0.5]).volume(), 0.25);
        let v = rect(&[0.1, 0.0, 0.25], &[0.9, 1.0, 0.75]).volume();
        assert!((v - 0.4).abs() < 1e-15);
    }

    #[test]
    fn support_examples() {
        assert!(Rectangle::unit(2).support().is_empty());
        assert_eq!(rect(&[0.2, 0.0], &[1.0, 1.0]).support(), vec![0]);
        assert_eq!(rect(&[0.0, 0.5, 0.0], &[0.5, 1.0, 1.0]).support(), vec![0, 1]);
    }

    #[test]
    fn degenerate_rectangles_are_rejected() {
        assert!(Rectangle::new(vec![0.3], vec![0.3]).is_err());
        assert!(Rectangle::new(vec![0.5], vec![0.2]).is_err());
        assert!(Rectangle::new(vec![-0.1], vec![0.2]).is_err());
        assert!(Rectangle::new(vec![0.0], vec![1.5]).is_err());
        assert!(Rectangle::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn count_points_examples() {
        let rows = vec![vec![0.1, 0.1], vec![0.3, 0.3], vec![0.6, 0.6], vec![0.9, 0.9]];
        let data = Dataset::from_rows(&rows, vec![0.0; 4], None).unwrap();
        assert_eq!(count_points(&Rectangle::unit(2), &data), 4);
        assert_eq!(count_points(&rect(&[0.0, 0.0], &[0.5, 0.5]), &data), 2);
        assert_eq!(count_points(&rect(&[0.4, 0.4], &[0.5, 0.5]), &data), 0);
    }

    #[test]
    fn membership_is_closed_above_open_below() {
        let (lower, upper) = Rectangle::unit(1).split(0, 0.5).unwrap();
        assert!(lower.contains(&[0.5]));
        assert!(!upper.contains(&[0.5]));
        assert!(lower.contains(&[0.0]));
        assert!(upper.contains(&[1.0]));
    }

    #[test]
    fn rank_transform_examples() {
        let out = rank_transform_columns(1, &[3.0, 1.0, 2.0]);
        let expect = [5.0 / 6.0, 1.0 / 6.0, 0.5];
        for (a, b) in out.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(rank_transform_columns(1, &[4.0, 4.0, 4.0, 4.0]), vec![0.5; 4]);
        let fixed = vec![0.125, 0.375, 0.625, 0.875];
        assert_eq!(rank_transform_columns(1, &[0.625, 0.125, 0.875, 0.375]), vec![0.625, 0.125, 0.875, 0.375]);
        assert_eq!(rank_transform_columns(1, &fixed), fixed);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(1, vec![1.5], vec![0.0], None).is_err());
        assert!(Dataset::new(1, vec![], vec![], None).is_err());
        assert!(Dataset::new(1, vec![0.5], vec![2.0], Some(1.0)).is_err());
        let data = Dataset::new(1, vec![0.5, 0.2], vec![-3.0, 2.0], None).unwrap();
        assert_eq!(data.m(), 3.0);
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(ceil_tol(0.2 * 1000.0), 200);
        assert_eq!(ceil_tol(3.2), 4);
        assert_eq!(floor_tol(20000.0 * 0.2 * 0.2), 800);
        assert_eq!(min_child_count(0.25, 100), 25);
        assert_eq!(min_child_count(0.5, 101), 50);
    }
}
