//! Dyadic families of rectangles that sandwich every large rectangle.
//!
//! For axes `S` (`|S| = s`), scale `w` and accuracy `eps`, a family member is
//! described per axis by counters `(tau, a, b)`:
//!
//! ```text
//! lo = a * 2^(tau-1) * w*eps/s
//! hi = min(1, lo + w*2^tau + b * 2^(tau-1) * w*eps/s)
//! 0 <= tau <= floor(log2(1/w)),  a <= floor(2^(1-tau) s/(w eps)),  b <= ceil(2s/eps)
//! sum(tau) >= (s-1) log2(1/w) - s
//! ```
//!
//! Axes outside `S` span `[0,1]`. Logarithms in this module are base 2.
//!
//! Internally every coordinate is an integer multiple of the grain
//! `g = w*eps/(2s)` (`2^(tau-1) w eps/s = 2^tau g`), which lets distinct
//! counter tuples that describe the same geometry be merged exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{ceil_tol, floor_tol, Rectangle};

/// Default cap on materialized enumeration size.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

const TAU_SUM_SLACK: f64 = 1e-9;
const KEY_SCALE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxFamilyParams {
    axes: Vec<usize>,
    w: f64,
    eps: f64,
}

impl ApproxFamilyParams {
    /// `axes` must be distinct; `w` in `(0,1)`, `eps` in `(0,1]`.
    pub fn new(mut axes: Vec<usize>, w: f64, eps: f64) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParams("the family needs at least one axis".into()));
        }
        axes.sort_unstable();
        if axes.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidParams("family axes must be distinct".into()));
        }
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::InvalidParams(format!("w must lie in (0,1), got {w}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParams(format!("eps must lie in (0,1], got {eps}")));
        }
        Ok(ApproxFamilyParams { axes, w, eps })
    }

    /// Family on the first `s` axes.
    pub fn leading(s: usize, w: f64, eps: f64) -> Result<Self> {
        Self::new((0..s).collect(), w, eps)
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn s(&self) -> usize {
        self.axes.len()
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn tau_max(&self) -> u32 {
        floor_tol((1.0 / self.w).log2()) as u32
    }

    pub fn a_max(&self, tau: u32) -> u64 {
        floor_tol(2f64.powi(1 - tau as i32) * self.s() as f64 / (self.w * self.eps)) as u64
    }

    pub fn b_max(&self) -> u64 {
        ceil_tol(2.0 * self.s() as f64 / self.eps) as u64
    }

    /// `w (1 + eps/(2s))^s`. Above this volume every axis has room for an
    /// inner interval at a scale vector meeting the scale constraint.
    pub fn admissible_volume(&self) -> f64 {
        self.w * (1.0 + self.eps / (2.0 * self.s() as f64)).powi(self.s() as i32)
    }

    /// Supported on the family axes with volume at least [`Self::admissible_volume`].
    pub fn is_admissible(&self, r: &Rectangle) -> bool {
        r.support().iter().all(|j| self.axes.binary_search(j).is_ok()) && r.volume() >= self.admissible_volume()
    }

    /// Right-hand side of the scale constraint on `sum(tau)`.
    pub fn tau_sum_min(&self) -> f64 {
        (self.s() as f64 - 1.0) * (1.0 / self.w).log2() - self.s() as f64
    }

    /// Smallest integer value `sum(tau)` may take.
    pub fn tau_sum_floor(&self) -> i64 {
        (self.tau_sum_min() - TAU_SUM_SLACK).ceil() as i64
    }

    fn grain(&self) -> f64 {
        self.w * self.eps / (2.0 * self.s() as f64)
    }

    /// `w / g = 2s/eps` when it is an integer, so `w*2^tau` lands on the grain.
    fn integral_base_ratio(&self) -> Option<u64> {
        let r = 2.0 * self.s() as f64 / self.eps;
        let rounded = r.round();
        ((r - rounded).abs() < 1e-9).then_some(rounded as u64)
    }

    fn interval(&self, c: Counter) -> Interval {
        let g = self.grain();
        let scale = 1u64 << c.tau;
        let lo_units = c.a * scale;
        let hi_units = (c.a + c.b) * scale;
        let lo = (lo_units as f64 * g).min(1.0);
        let (raw_hi, key_hi) = match self.integral_base_ratio() {
            Some(r) => {
                let units = hi_units + scale * r;
                (units as f64 * g, units as f64)
            }
            None => (
                hi_units as f64 * g + scale as f64 * self.w,
                hi_units as f64 + scale as f64 * self.w / g,
            ),
        };
        let clamped = raw_hi >= 1.0;
        let hi = raw_hi.min(1.0);
        let key_hi = if clamped { i64::MAX } else { (key_hi * KEY_SCALE).round() as i64 };
        Interval {
            lo,
            hi,
            key: (lo_units, key_hi),
        }
    }

    fn check(&self, c: Counter) -> Result<()> {
        if c.tau > self.tau_max() {
            return Err(Error::CounterOutOfRange(format!("tau = {} > {}", c.tau, self.tau_max())));
        }
        if c.a > self.a_max(c.tau) {
            return Err(Error::CounterOutOfRange(format!("a = {} > {}", c.a, self.a_max(c.tau))));
        }
        if c.b > self.b_max() {
            return Err(Error::CounterOutOfRange(format!("b = {} > {}", c.b, self.b_max())));
        }
        Ok(())
    }
}

/// Per-axis counters of a family member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counter {
    pub tau: u32,
    pub a: u64,
    pub b: u64,
}

/// Family member in counter form, one [`Counter`] per family axis (in the
/// family's sorted axis order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridRectangle {
    pub counters: Vec<Counter>,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
    key: (u64, i64),
}

impl GridRectangle {
    pub fn tau_sum(&self) -> u64 {
        self.counters.iter().map(|c| u64::from(c.tau)).sum()
    }
}

/// Builds the rectangle in `[0,1]^d` described by `g`.
pub fn materialize(g: &GridRectangle, p: &ApproxFamilyParams, d: usize) -> Result<Rectangle> {
    if g.counters.len() != p.s() {
        return Err(Error::CounterOutOfRange(format!(
            "expected {} counters, got {}",
            p.s(),
            g.counters.len()
        )));
    }
    let max_axis = *p.axes.last().expect("non-empty axes");
    if d <= max_axis {
        return Err(Error::DimensionMismatch {
            expected: max_axis + 1,
            got: d,
        });
    }
    for &c in &g.counters {
        p.check(c)?;
    }
    if (g.tau_sum() as i64) < p.tau_sum_floor() {
        return Err(Error::CounterOutOfRange(format!(
            "sum of tau = {} is below {:.4}",
            g.tau_sum(),
            p.tau_sum_min()
        )));
    }
    let mut lo = vec![0.0; d];
    let mut hi = vec![1.0; d];
    for (&axis, &c) in p.axes.iter().zip(&g.counters) {
        let iv = p.interval(c);
        lo[axis] = iv.lo;
        hi[axis] = iv.hi;
    }
    Rectangle::new(lo, hi).map_err(|e| Error::CounterOutOfRange(format!("degenerate member: {e}")))
}

/// Distinct non-degenerate intervals reachable on one axis, each with the
/// largest `tau` that produces it.
struct AxisCatalogue {
    entries: Vec<(Interval, Counter)>,
}

impl AxisCatalogue {
    fn build(p: &ApproxFamilyParams) -> Self {
        let mut best: BTreeMap<(u64, i64), (Interval, Counter)> = BTreeMap::new();
        for tau in 0..=p.tau_max() {
            for a in 0..=p.a_max(tau) {
                for b in 0..=p.b_max() {
                    let c = Counter { tau, a, b };
                    let iv = p.interval(c);
                    if iv.lo >= iv.hi {
                        continue;
                    }
                    best.entry(iv.key)
                        .and_modify(|e| {
                            if tau > e.1.tau {
                                *e = (iv, c);
                            }
                        })
                        .or_insert((iv, c));
                }
            }
        }
        AxisCatalogue {
            entries: best.into_values().collect(),
        }
    }

    fn histogram(&self, tau_max: u32) -> Vec<u128> {
        let mut h = vec![0u128; tau_max as usize + 1];
        for (_, c) in &self.entries {
            h[c.tau as usize] += 1;
        }
        h
    }
}

/// Number of `s`-tuples from per-axis histograms whose `tau` sum reaches `min_sum`.
fn count_tuples(hist: &[u128], s: usize, min_sum: i64) -> u128 {
    let tmax = hist.len() - 1;
    let mut dist = vec![0u128; 1];
    dist[0] = 1;
    for _ in 0..s {
        let mut next = vec![0u128; dist.len() + tmax];
        for (sum, &ways) in dist.iter().enumerate() {
            if ways == 0 {
                continue;
            }
            for (t, &h) in hist.iter().enumerate() {
                next[sum + t] += ways * h;
            }
        }
        dist = next;
    }
    dist.iter()
        .enumerate()
        .filter(|(sum, _)| *sum as i64 >= min_sum)
        .map(|(_, &w)| w)
        .sum()
}

/// Number of distinct (non-degenerate) rectangles in the family. With
/// `enforce_scale_constraint = false` the `sum(tau)` constraint is dropped.
pub fn family_size(p: &ApproxFamilyParams, enforce_scale_constraint: bool) -> u128 {
    let cat = AxisCatalogue::build(p);
    let min_sum = if enforce_scale_constraint { p.tau_sum_floor() } else { i64::MIN };
    count_tuples(&cat.histogram(p.tau_max()), p.s(), min_sum)
}

/// Number of raw counter tuples satisfying the counter ranges and the scale
/// constraint, before removing duplicate or degenerate geometry.
pub fn counter_tuple_count(p: &ApproxFamilyParams) -> u128 {
    let hist: Vec<u128> = (0..=p.tau_max())
        .map(|t| u128::from(p.a_max(t) + 1) * u128::from(p.b_max() + 1))
        .collect();
    count_tuples(&hist, p.s(), p.tau_sum_floor())
}

/// All distinct family members, each in counter form with the largest `tau`
/// per axis that realises its geometry.
pub fn enumerate(p: &ApproxFamilyParams, cap: usize) -> Result<Vec<GridRectangle>> {
    let cat = AxisCatalogue::build(p);
    let total = count_tuples(&cat.histogram(p.tau_max()), p.s(), p.tau_sum_floor());
    if total > cap as u128 {
        return Err(Error::EnumerationTooLarge {
            estimate: total as f64,
            cap,
        });
    }
    let min_sum = p.tau_sum_floor();
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; p.s()];
    let m = cat.entries.len();
    'outer: loop {
        let tau_sum: i64 = idx.iter().map(|&i| i64::from(cat.entries[i].1.tau)).sum();
        if tau_sum >= min_sum {
            out.push(GridRectangle {
                counters: idx.iter().map(|&i| cat.entries[i].1).collect(),
            });
        }
        for pos in (0..idx.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < m {
                continue 'outer;
            }
            idx[pos] = 0;
        }
        break;
    }
    Ok(out)
}

/// `(1/w) (8 s^2/eps^2 (1 + log2 floor(1/w)))^s`, the leading term of the
/// family size bound (the `1 + O(eps)` factor is not included).
pub fn cardinality_bound(s: usize, w: f64, eps: f64) -> f64 {
    let s_f = s as f64;
    let inner = 8.0 * s_f * s_f / (eps * eps) * (1.0 + (floor_tol(1.0 / w) as f64).log2());
    inner.powi(s as i32) / w
}

/// `ln C(d, s) + ln(cardinality_bound(s, w, eps))`.
pub fn union_family_log_size(s: usize, w: f64, eps: f64, d: usize) -> Result<f64> {
    if s == 0 || s > d {
        return Err(Error::InvalidParams(format!("need 1 <= s <= d, got s = {s}, d = {d}")));
    }
    Ok(ln_binomial(d, s) + cardinality_bound(s, w, eps).ln())
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// How an approximant pair was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxMethod {
    /// Per-axis scale `tau = floor(log2(width / w))` with the nearest grid
    /// endpoints (one scale up for the outer box when the `b` range runs out).
    Constructive,
    /// Best members over all admissible scale vectors.
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub inner: Rectangle,
    pub outer: Rectangle,
    pub inner_counters: GridRectangle,
    pub outer_counters: GridRectangle,
    pub method: ApproxMethod,
}

/// `inner ⊆ r ⊆ outer`, `e^-eps vol(outer) <= vol(r) <= e^eps vol(inner)`.
pub fn sandwich_holds(r: &Rectangle, inner: &Rectangle, outer: &Rectangle, eps: f64) -> bool {
    let v = r.volume();
    r.contains_rect(inner)
        && outer.contains_rect(r)
        && (-eps).exp() * outer.volume() <= v
        && v <= eps.exp() * inner.volume()
}

#[derive(Clone, Copy)]
struct Candidate {
    counter: Counter,
    lo: f64,
    hi: f64,
}

impl Candidate {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Smallest family interval at scale `tau` containing `[lo, hi]`.
fn outer_at(p: &ApproxFamilyParams, tau: u32, lo: f64, hi: f64) -> Option<Candidate> {
    let unit = p.grain() * f64::from(1u32 << tau);
    let a_max = p.a_max(tau);
    let lo_of = |a: u64| p.interval(Counter { tau, a, b: 0 }).lo;
    let mut a = ((lo / unit).floor().max(0.0) as u64).min(a_max);
    while a > 0 && lo_of(a) > lo {
        a -= 1;
    }
    while a < a_max && lo_of(a + 1) <= lo {
        a += 1;
    }
    if lo_of(a) > lo {
        return None;
    }
    let b_max = p.b_max();
    let hi_of = |b: u64| p.interval(Counter { tau, a, b }).hi;
    let base = p.w * f64::from(1u32 << tau);
    let mut b = (((hi - lo_of(a) - base) / unit).ceil().max(0.0) as u64).min(b_max);
    while b < b_max && hi_of(b) < hi {
        b += 1;
    }
    while b > 0 && hi_of(b - 1) >= hi {
        b -= 1;
    }
    let iv = p.interval(Counter { tau, a, b });
    (iv.hi >= hi && iv.lo < iv.hi).then_some(Candidate {
        counter: Counter { tau, a, b },
        lo: iv.lo,
        hi: iv.hi,
    })
}

/// Largest family interval at scale `tau` contained in `[lo, hi]`.
fn inner_at(p: &ApproxFamilyParams, tau: u32, lo: f64, hi: f64) -> Option<Candidate> {
    let unit = p.grain() * f64::from(1u32 << tau);
    let a_max = p.a_max(tau);
    let lo_of = |a: u64| p.interval(Counter { tau, a, b: 0 }).lo;
    let mut a = ((lo / unit).ceil().max(0.0) as u64).min(a_max);
    while a < a_max && lo_of(a) < lo {
        a += 1;
    }
    while a > 0 && lo_of(a - 1) >= lo {
        a -= 1;
    }
    if lo_of(a) < lo {
        return None;
    }
    let b_max = p.b_max();
    let hi_of = |b: u64| p.interval(Counter { tau, a, b }).hi;
    if hi_of(0) > hi {
        return None;
    }
    let base = p.w * f64::from(1u32 << tau);
    let mut b = (((hi - lo_of(a) - base) / unit).floor().max(0.0) as u64).min(b_max);
    while b > 0 && hi_of(b) > hi {
        b -= 1;
    }
    while b < b_max && hi_of(b + 1) <= hi {
        b += 1;
    }
    let iv = p.interval(Counter { tau, a, b });
    (iv.hi <= hi && iv.lo < iv.hi).then_some(Candidate {
        counter: Counter { tau, a, b },
        lo: iv.lo,
        hi: iv.hi,
    })
}

fn proof_scale(p: &ApproxFamilyParams, width: f64) -> u32 {
    let mut tau = (width / p.w).log2().floor().max(0.0) as u32;
    tau = tau.min(p.tau_max());
    // settle representation error so that w 2^tau <= width < w 2^(tau+1)
    while tau > 0 && p.w * f64::from(1u32 << tau) > width {
        tau -= 1;
    }
    while tau < p.tau_max() && p.w * f64::from(1u32 << (tau + 1)) <= width {
        tau += 1;
    }
    tau
}

/// Picks one candidate per axis maximising (inner) or minimising (outer) the
/// product of widths subject to the scale constraint.
fn best_scale_vector(
    p: &ApproxFamilyParams,
    per_axis: &[Vec<Option<Candidate>>],
    maximise: bool,
) -> Option<Vec<Candidate>> {
    let tmax = p.tau_max() as usize;
    let s = per_axis.len();
    // dp[sum] = (score, choices)
    let mut dp: Vec<Option<(f64, Vec<Candidate>)>> = vec![Some((0.0, Vec::new()))];
    for options in per_axis {
        let mut next: Vec<Option<(f64, Vec<Candidate>)>> = vec![None; dp.len() + tmax];
        for (sum, state) in dp.iter().enumerate() {
            let Some((score, chosen)) = state else { continue };
            for (t, cand) in options.iter().enumerate() {
                let Some(c) = cand else { continue };
                let gain = if maximise { c.width().ln() } else { -c.width().ln() };
                let total = score + gain;
                let slot = &mut next[sum + t];
                if slot.as_ref().is_none_or(|(best, _)| total > *best) {
                    let mut v = chosen.clone();
                    v.push(*c);
                    *slot = Some((total, v));
                }
            }
        }
        dp = next;
    }
    let min_sum = p.tau_sum_floor();
    dp.into_iter()
        .enumerate()
        .filter(|(sum, _)| *sum as i64 >= min_sum)
        .filter_map(|(_, st)| st)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| v)
        .filter(|v| v.len() == s)
}

fn assemble(r: &Rectangle, p: &ApproxFamilyParams, picks: &[Candidate]) -> Result<(Rectangle, GridRectangle)> {
    let mut lo = r.lo().to_vec();
    let mut hi = r.hi().to_vec();
    for (&axis, c) in p.axes.iter().zip(picks) {
        lo[axis] = c.lo;
        hi[axis] = c.hi;
    }
    Ok((
        Rectangle::new(lo, hi)?,
        GridRectangle {
            counters: picks.iter().map(|c| c.counter).collect(),
        },
    ))
}

fn scale_ok(p: &ApproxFamilyParams, picks: &[Candidate]) -> bool {
    picks.iter().map(|c| i64::from(c.counter.tau)).sum::<i64>() >= p.tau_sum_floor()
}

/// Inner and outer family members sandwiching `r`.
///
/// Tries the per-axis constructive choice first and falls back to the best
/// members over all scale vectors when that choice misses the volume bounds.
pub fn approximate(r: &Rectangle, p: &ApproxFamilyParams) -> Result<Approximation> {
    let max_axis = *p.axes.last().expect("non-empty axes");
    if r.dim() <= max_axis {
        return Err(Error::DimensionMismatch {
            expected: max_axis + 1,
            got: r.dim(),
        });
    }
    if r.support().iter().any(|j| p.axes.binary_search(j).is_err()) {
        return Err(Error::SupportMismatch);
    }
    let volume = r.volume();
    if volume < p.w {
        return Err(Error::VolumeTooSmall { volume, w: p.w });
    }

    let bounds: Vec<(f64, f64)> = p.axes.iter().map(|&j| (r.lo()[j], r.hi()[j])).collect();

    let constructive_outer: Option<Vec<Candidate>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let tau = proof_scale(p, hi - lo);
            outer_at(p, tau, lo, hi).or_else(|| (tau < p.tau_max()).then(|| outer_at(p, tau + 1, lo, hi)).flatten())
        })
        .collect();
    let constructive_inner: Option<Vec<Candidate>> = bounds
        .iter()
        .map(|&(lo, hi)| inner_at(p, proof_scale(p, hi - lo), lo, hi))
        .collect();

    if let (Some(o), Some(i)) = (&constructive_outer, &constructive_inner) {
        if scale_ok(p, o) && scale_ok(p, i) {
            let (outer, outer_counters) = assemble(r, p, o)?;
            let (inner, inner_counters) = assemble(r, p, i)?;
            if sandwich_holds(r, &inner, &outer, p.eps) {
                return Ok(Approximation {
                    inner,
                    outer,
                    inner_counters,
                    outer_counters,
                    method: ApproxMethod::Constructive,
                });
            }
        }
    }

    let tmax = p.tau_max();
    let outer_opts: Vec<Vec<Option<Candidate>>> = bounds
        .iter()
        .map(|&(lo, hi)| (0..=tmax).map(|t| outer_at(p, t, lo, hi)).collect())
        .collect();
    let inner_opts: Vec<Vec<Option<Candidate>>> = bounds
        .iter()
        .map(|&(lo, hi)| (0..=tmax).map(|t| inner_at(p, t, lo, hi)).collect())
        .collect();
    let o = best_scale_vector(p, &outer_opts, false).ok_or(Error::NoApproximant { side: "outer" })?;
    let i = best_scale_vector(p, &inner_opts, true).ok_or(Error::NoApproximant { side: "inner" })?;
    let (outer, outer_counters) = assemble(r, p, &o)?;
    let (inner, inner_counters) = assemble(r, p, &i)?;
    let v = r.volume();
    if (-p.eps).exp() * outer.volume() > v {
        return Err(Error::NoApproximant { side: "outer" });
    }
    if v > p.eps.exp() * inner.volume() {
        return Err(Error::NoApproximant { side: "inner" });
    }
    Ok(Approximation {
        inner,
        outer,
        inner_counters,
        outer_counters,
        method: ApproxMethod::Optimized,
    })
}

/// Random admissible rectangle (volume in `[admissible_volume, 1]`):
/// log-volume uniform, split across axes by uniform weights, positions uniform.
pub fn sample_admissible<R: rand::Rng + ?Sized>(p: &ApproxFamilyParams, d: usize, rng: &mut R) -> Rectangle {
    let log_v = rng.random_range(p.admissible_volume().ln()..=0.0);
    let weights: Vec<f64> = (0..p.s()).map(|_| rng.random::<f64>() + 1e-12).collect();
    let total: f64 = weights.iter().sum();
    let mut lo = vec![0.0; d];
    let mut hi = vec![1.0; d];
    for (&axis, wt) in p.axes.iter().zip(&weights) {
        let extent = (log_v * wt / total).exp().min(1.0);
        let start = rng.random_range(0.0..=(1.0 - extent));
        lo[axis] = start;
        hi[axis] = (start + extent).min(1.0);
    }
    Rectangle::new(lo, hi).expect("positive extents")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(lo: &[f64], hi: &[f64]) -> Rectangle {
        Rectangle::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn materialize_examples() {
        let p = ApproxFamilyParams::leading(1, 0.25, 0.5).unwrap();
        let base = GridRectangle {
            counters: vec![Counter { tau: 0, a: 0, b: 0 }],
        };
        assert_eq!(materialize(&base, &p, 1).unwrap(), rect(&[0.0], &[0.25]));

        let g = GridRectangle {
            counters: vec![Counter { tau: 1, a: 2, b: 1 }],
        };
        assert_eq!(materialize(&g, &p, 1).unwrap(), rect(&[0.25], &[0.875]));

        let g = GridRectangle {
            counters: vec![Counter { tau: 2, a: 1, b: 3 }],
        };
        assert_eq!(materialize(&g, &p, 1).unwrap().hi()[0], 1.0);
    }

    #[test]
    fn materialize_rejects_bad_counters() {
        let p = ApproxFamilyParams::leading(1, 0.25, 0.5).unwrap();
        let g = GridRectangle {
            counters: vec![Counter { tau: 3, a: 0, b: 0 }],
        };
        assert!(matches!(materialize(&g, &p, 1), Err(Error::CounterOutOfRange(_))));
        let g = GridRectangle {
            counters: vec![Counter { tau: 0, a: 0, b: 5 }],
        };
        assert!(matches!(materialize(&g, &p, 1), Err(Error::CounterOutOfRange(_))));
        let g = GridRectangle {
            counters: vec![Counter { tau: 0, a: 17, b: 0 }],
        };
        assert!(matches!(materialize(&g, &p, 1), Err(Error::CounterOutOfRange(_))));
        // s = 3, w = 0.25: sum(tau) >= 1
        let p3 = ApproxFamilyParams::leading(3, 0.25, 0.5).unwrap();
        let g = GridRectangle {
            counters: vec![Counter { tau: 0, a: 0, b: 0 }; 3],
        };
        assert!(matches!(materialize(&g, &p3, 3), Err(Error::CounterOutOfRange(_))));
    }

    #[test]
    fn cardinality_bound_examples() {
        assert!((cardinality_bound(2, 0.25, 0.5) - 589_824.0).abs() < 1e-6);
        assert!((cardinality_bound(1, 0.5, 1.0) - 32.0).abs() < 1e-12);
        assert!(cardinality_bound(2, 0.1, 0.5) > cardinality_bound(2, 0.25, 0.5));
        assert!(cardinality_bound(2, 0.25, 0.25) > cardinality_bound(2, 0.25, 0.5));
    }

    #[test]
    fn union_family_log_size_examples() {
        let single = cardinality_bound(3, 0.25, 0.5).ln();
        assert!((union_family_log_size(3, 0.25, 0.5, 3).unwrap() - single).abs() < 1e-12);
        let v = union_family_log_size(2, 0.25, 0.5, 1000).unwrap();
        assert!((v - (499_500f64.ln() + 589_824f64.ln())).abs() < 1e-9);
        assert!((v - 26.41).abs() < 0.01);
        assert!(union_family_log_size(2, 0.25, 0.5, 2000).unwrap() > v);
        assert!(union_family_log_size(3, 0.25, 0.5, 2).is_err());
    }

    #[test]
    fn member_is_its_own_approximant() {
        let p = ApproxFamilyParams::leading(2, 0.25, 0.5).unwrap();
        let g = GridRectangle {
            counters: vec![Counter { tau: 1, a: 3, b: 2 }, Counter { tau: 2, a: 0, b: 8 }],
        };
        let r = materialize(&g, &p, 2).unwrap();
        let approx = approximate(&r, &p).unwrap();
        assert_eq!(approx.inner, r);
        assert_eq!(approx.outer, r);
    }

    #[test]
    fn approximate_errors() {
        let p = ApproxFamilyParams::leading(1, 0.25, 0.5).unwrap();
        assert!(matches!(
            approximate(&rect(&[0.3, 0.0], &[0.4, 1.0]), &p),
            Err(Error::VolumeTooSmall { .. })
        ));
        assert!(matches!(
            approximate(&rect(&[0.3, 0.1], &[0.9, 1.0]), &p),
            Err(Error::SupportMismatch)
        ));
    }

    #[test]
    fn enumeration_is_duplicate_free_and_valid() {
        let p = ApproxFamilyParams::leading(2, 0.25, 1.0).unwrap();
        let members = enumerate(&p, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(members.len() as u128, family_size(&p, true));
        let mut seen = std::collections::HashSet::new();
        for g in &members {
            let r = materialize(g, &p, 2).unwrap();
            assert!(seen.insert((r.lo().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), r.hi().iter().map(|v| v.to_bits()).collect::<Vec<_>>())));
            for (j, c) in g.counters.iter().enumerate() {
                // each axis spans at least its base scale unless clamped at 1
                let width = r.width(j);
                assert!(width >= p.w() * f64::from(1u32 << c.tau) - 1e-12 || r.hi()[j] == 1.0);
            }
        }
    }

    #[test]
    fn enumeration_cap() {
        let p = ApproxFamilyParams::leading(3, 0.1, 0.25).unwrap();
        assert!(matches!(
            enumerate(&p, DEFAULT_ENUMERATION_CAP),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
