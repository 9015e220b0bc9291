//! Guess-and-check training.
//!
//! Each tree grows from a FIFO frontier. A node draws one axis uniformly at
//! random and finds the best admissible threshold on it. An axis that has
//! not yet produced a split in this tree must clear the split threshold; once
//! it does, it is unlocked and later splits on it are accepted whenever some
//! admissible threshold exists. `alpha = 0.5` selects the median variant,
//! which always proposes the lower median.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{split_threshold, BoundParams};
use crate::error::{Error, Result};
use crate::geometry::{min_child_count, Dataset};
use crate::partition::{NodeId, Partition};
use crate::seed::{derive_seed, rng_from_seed, SimRng};
use crate::trees::{Forest, ForestMeta, ValidTree};

pub const DEFAULT_MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GacConfig {
    pub k: usize,
    pub alpha: f64,
    pub m: f64,
    pub b: usize,
    pub max_attempts_per_node: usize,
    pub seed: u64,
    /// Density envelope used in the threshold (1 for uniform features).
    pub zeta: f64,
    /// Replaces the bound-derived split threshold. Diagnostic only; `None`
    /// trains with the threshold implied by the concentration bound.
    pub threshold_override: Option<f64>,
}

impl GacConfig {
    pub fn new(k: usize, alpha: f64, m: f64, b: usize, seed: u64) -> Result<Self> {
        let cfg = GacConfig {
            k,
            alpha,
            m,
            b,
            max_attempts_per_node: DEFAULT_MAX_ATTEMPTS,
            seed,
            zeta: 1.0,
            threshold_override: None,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        if self.b == 0 {
            return Err(Error::InvalidParams("B must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 0.5], got {}", self.alpha)));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::InvalidParams(format!("M must be positive, got {}", self.m)));
        }
        if self.max_attempts_per_node == 0 {
            return Err(Error::InvalidParams("max_attempts_per_node must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_median(&self) -> bool {
        self.alpha >= 0.5
    }

    /// Threshold that a locked axis must reach on `data`.
    pub fn threshold(&self, data: &Dataset) -> Result<f64> {
        if let Some(t) = self.threshold_override {
            return Ok(t);
        }
        let p = BoundParams::new(data.n(), data.d(), self.k, self.alpha, self.m, self.zeta)?;
        Ok(split_threshold(&p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub ell: f64,
    pub delta: f64,
    pub n_minus: usize,
    pub n_plus: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub theta_hat: f64,
    pub score: f64,
    pub n_minus: usize,
    pub n_plus: usize,
    pub delta: f64,
}

/// `4 N- N+ / (N- + N+)^2 * delta^2`.
pub fn ell(n_minus: usize, n_plus: usize, delta: f64) -> f64 {
    let total = (n_minus + n_plus) as f64;
    4.0 * n_minus as f64 * n_plus as f64 / (total * total) * delta * delta
}

/// Scores the split of `rows` at `x_j <= theta`. `delta` is the upper mean
/// minus the lower mean.
pub fn score_split(rows: &[usize], j: usize, theta: f64, data: &Dataset) -> Result<SplitScore> {
    let (mut sum_lo, mut sum_hi) = (0.0, 0.0);
    let (mut n_lo, mut n_hi) = (0usize, 0usize);
    for &i in rows {
        if data.feature(i, j) <= theta {
            sum_lo += data.y()[i];
            n_lo += 1;
        } else {
            sum_hi += data.y()[i];
            n_hi += 1;
        }
    }
    if n_lo == 0 || n_hi == 0 {
        return Err(Error::EmptySide);
    }
    let delta = sum_hi / n_hi as f64 - sum_lo / n_lo as f64;
    Ok(SplitScore {
        ell: ell(n_lo, n_hi, delta),
        delta,
        n_minus: n_lo,
        n_plus: n_hi,
    })
}

/// Sorted `(x_j, y)` pairs of the node, ties broken by row index.
fn sorted_column(rows: &[usize], j: usize, data: &Dataset) -> Vec<(f64, f64)> {
    let mut col: Vec<(f64, usize)> = rows.iter().map(|&i| (data.feature(i, j), i)).collect();
    col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    col.into_iter().map(|(x, i)| (x, data.y()[i])).collect()
}

/// Best admissible threshold on axis `j`, or `None` when no positive sample
/// value leaves both sides with at least `max(min_child_count, k)` points.
pub fn best_split(rows: &[usize], j: usize, data: &Dataset, cfg: &GacConfig) -> Option<SplitCandidate> {
    let m = rows.len();
    let required = min_child_count(cfg.alpha, m).max(cfg.k);
    if m < 2 * required.max(1) {
        return None;
    }
    let col = sorted_column(rows, j, data);
    let total: f64 = col.iter().map(|p| p.1).sum();

    if cfg.is_median() {
        let theta = col[m / 2 - 1].0;
        if theta <= 0.0 {
            return None;
        }
        let n_lo = col.partition_point(|p| p.0 <= theta);
        let n_hi = m - n_lo;
        if n_lo < required || n_hi < required {
            return None;
        }
        let sum_lo: f64 = col[..n_lo].iter().map(|p| p.1).sum();
        let delta = (total - sum_lo) / n_hi as f64 - sum_lo / n_lo as f64;
        return Some(SplitCandidate {
            theta_hat: theta,
            score: ell(n_lo, n_hi, delta),
            n_minus: n_lo,
            n_plus: n_hi,
            delta,
        });
    }

    let mut best: Option<SplitCandidate> = None;
    let mut sum_lo = 0.0;
    let mut i = 0;
    while i < m {
        let theta = col[i].0;
        while i < m && col[i].0 == theta {
            sum_lo += col[i].1;
            i += 1;
        }
        let (n_lo, n_hi) = (i, m - i);
        if n_hi < required {
            break;
        }
        // a cut at 0 would leave the lower child with zero width
        if n_lo < required || theta <= 0.0 {
            continue;
        }
        let delta = (total - sum_lo) / n_hi as f64 - sum_lo / n_lo as f64;
        let score = ell(n_lo, n_hi, delta);
        if best.is_none_or(|b| score > b.score) {
            best = Some(SplitCandidate {
                theta_hat: theta,
                score,
                n_minus: n_lo,
                n_plus: n_hi,
                delta,
            });
        }
    }
    best
}

/// Per-tree training state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GacState {
    pub unlocked: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitDecision {
    Accepted(SplitCandidate),
    Rejected(SplitCandidate),
    Inadmissible,
}

/// One guess on axis `j`. Acceptance of a locked axis requires
/// `score >= threshold` and unlocks it.
pub fn try_split(
    rows: &[usize],
    j: usize,
    data: &Dataset,
    cfg: &GacConfig,
    threshold: f64,
    state: &mut GacState,
) -> SplitDecision {
    let Some(c) = best_split(rows, j, data, cfg) else {
        return SplitDecision::Inadmissible;
    };
    if state.unlocked.contains(&j) {
        SplitDecision::Accepted(c)
    } else if c.score >= threshold {
        state.unlocked.insert(j);
        SplitDecision::Accepted(c)
    } else {
        SplitDecision::Rejected(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Accepted,
    Rejected,
    Inadmissible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub node: usize,
    pub axis: usize,
    pub outcome: Outcome,
    pub score: Option<f64>,
    /// First scored (admissible) attempt on this axis in the tree.
    pub first_on_axis: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeTrace {
    pub attempts: Vec<Attempt>,
    pub unlocked: Vec<usize>,
    pub threshold: f64,
}

impl TreeTrace {
    /// Axes of accepted splits, in order.
    pub fn split_axes(&self) -> Vec<usize> {
        self.attempts
            .iter()
            .filter(|a| a.outcome == Outcome::Accepted)
            .map(|a| a.axis)
            .collect()
    }
}

fn check_data(data: &Dataset, cfg: &GacConfig) -> Result<()> {
    cfg.check()?;
    if data.n() < cfg.k {
        return Err(Error::DatasetTooSmall(format!(
            "{} rows cannot fill a leaf of k = {}",
            data.n(),
            cfg.k
        )));
    }
    Ok(())
}

/// Trains one tree and records every guess.
pub fn train_tree_traced(data: &Dataset, cfg: &GacConfig, rng: &mut SimRng) -> Result<(ValidTree, TreeTrace)> {
    check_data(data, cfg)?;
    let threshold = cfg.threshold(data)?;
    let d = data.d();
    let mut partition = Partition::new(d, cfg.alpha, cfg.k)?;
    let mut state = GacState::default();
    let mut tried = vec![false; d];
    let mut trace = TreeTrace {
        threshold,
        ..TreeTrace::default()
    };

    let mut frontier: VecDeque<(NodeId, Vec<usize>, usize)> = VecDeque::new();
    if data.n() >= 2 * cfg.k {
        frontier.push_back((Partition::root(), (0..data.n()).collect(), 0));
    }
    while let Some((node, rows, failures)) = frontier.pop_front() {
        let j = rng.random_range(0..d);
        let decision = try_split(&rows, j, data, cfg, threshold, &mut state);
        let (outcome, score) = match decision {
            SplitDecision::Accepted(c) => (Outcome::Accepted, Some(c.score)),
            SplitDecision::Rejected(c) => (Outcome::Rejected, Some(c.score)),
            SplitDecision::Inadmissible => (Outcome::Inadmissible, None),
        };
        let first_on_axis = score.is_some() && !tried[j];
        if score.is_some() {
            tried[j] = true;
        }
        trace.attempts.push(Attempt {
            node: node.0,
            axis: j,
            outcome,
            score,
            first_on_axis,
        });
        match decision {
            SplitDecision::Accepted(c) => {
                let (lower, upper) = partition.split(node, j, c.theta_hat)?;
                let (lo_rows, hi_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| data.feature(i, j) <= c.theta_hat);
                for (child, child_rows) in [(lower, lo_rows), (upper, hi_rows)] {
                    if child_rows.len() >= 2 * cfg.k {
                        frontier.push_back((child, child_rows, 0));
                    }
                }
            }
            _ => {
                if failures + 1 < cfg.max_attempts_per_node {
                    frontier.push_back((node, rows, failures + 1));
                }
            }
        }
    }
    trace.unlocked = state.unlocked.into_iter().collect();
    Ok((ValidTree::fit(partition, data)?, trace))
}

pub fn train_tree(data: &Dataset, cfg: &GacConfig, rng: &mut SimRng) -> Result<ValidTree> {
    train_tree_traced(data, cfg, rng).map(|(t, _)| t)
}

fn forest_meta(data: &Dataset, cfg: &GacConfig) -> ForestMeta {
    ForestMeta {
        n: data.n(),
        d: data.d(),
        k: cfg.k,
        alpha: cfg.alpha,
        m: cfg.m,
        seed: cfg.seed,
        max_attempts_per_node: cfg.max_attempts_per_node,
    }
}

/// `B` trees, tree `b` seeded with `derive_seed(seed, b)`, trained in parallel.
pub fn train_forest_traced(data: &Dataset, cfg: &GacConfig) -> Result<(Forest, Vec<TreeTrace>)> {
    check_data(data, cfg)?;
    let results: Vec<Result<(ValidTree, TreeTrace)>> = (0..cfg.b)
        .into_par_iter()
        .map(|b| train_tree_traced(data, cfg, &mut rng_from_seed(derive_seed(cfg.seed, b as u64))))
        .collect();
    let mut trees = Vec::with_capacity(cfg.b);
    let mut traces = Vec::with_capacity(cfg.b);
    for r in results {
        let (t, tr) = r?;
        trees.push(t);
        traces.push(tr);
    }
    Ok((Forest::new(trees, forest_meta(data, cfg))?, traces))
}

pub fn train_forest(data: &Dataset, cfg: &GacConfig) -> Result<Forest> {
    train_forest_traced(data, cfg).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(1, xs.to_vec(), ys.to_vec(), None).unwrap()
    }

    fn cfg(k: usize, alpha: f64) -> GacConfig {
        GacConfig::new(k, alpha, 1.0, 1, 0).unwrap()
    }

    #[test]
    fn ell_examples() {
        assert_eq!(ell(50, 50, 2.0), 4.0);
        assert_eq!(ell(25, 75, 1.0), 0.75);
        assert_eq!(ell(10, 30, 0.0), 0.0);
    }

    #[test]
    fn score_split_signs_and_errors() {
        let data = line_data(&[0.1, 0.2, 0.7, 0.8], &[0.0, 0.0, 1.0, 1.0]);
        let rows: Vec<usize> = (0..4).collect();
        let s = score_split(&rows, 0, 0.2, &data).unwrap();
        assert_eq!((s.n_minus, s.n_plus), (2, 2));
        assert_eq!(s.delta, 1.0);
        assert_eq!(s.ell, 1.0);
        assert_eq!(score_split(&rows, 0, 0.8, &data), Err(Error::EmptySide));
    }

    #[test]
    fn constant_feature_has_no_split() {
        let data = line_data(&[0.5; 10], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let rows: Vec<usize> = (0..10).collect();
        assert!(best_split(&rows, 0, &data, &cfg(2, 0.25)).is_none());
    }

    #[test]
    fn only_the_median_is_admissible() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let ys: Vec<f64> = (0..10).map(|i| (i % 3) as f64).collect();
        let data = line_data(&xs, &ys);
        let rows: Vec<usize> = (0..10).collect();
        let c = best_split(&rows, 0, &data, &cfg(5, 0.25)).unwrap();
        assert_eq!(c.theta_hat, xs[4]);
        assert_eq!((c.n_minus, c.n_plus), (5, 5));
    }

    #[test]
    fn step_signal_matches_brute_force() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 17) % 40) as f64 / 40.0 + 0.0125).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x > 0.6 { 1.0 } else { 0.0 }).collect();
        let data = line_data(&xs, &ys);
        let rows: Vec<usize> = (0..40).collect();
        let c = cfg(3, 0.1);
        let best = best_split(&rows, 0, &data, &c).unwrap();
        let mut oracle: Option<(f64, f64)> = None;
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        for &theta in &sorted {
            let Ok(s) = score_split(&rows, 0, theta, &data) else { continue };
            if s.n_minus < 4 || s.n_plus < 4 {
                continue;
            }
            if oracle.is_none_or(|(_, e)| s.ell > e) {
                oracle = Some((theta, s.ell));
            }
        }
        let (theta, e) = oracle.unwrap();
        assert_eq!(best.theta_hat, theta);
        assert!((best.score - e).abs() < 1e-12);
        assert!(best.theta_hat <= 0.6 && sorted.iter().any(|&x| x > best.theta_hat && x > 0.6));
    }

    #[test]
    fn median_variant_uses_lower_median() {
        let xs: Vec<f64> = (0..9).map(|i| (i as f64 + 0.5) / 9.0).collect();
        let data = line_data(&xs, &[0.0; 9]);
        let rows: Vec<usize> = (0..9).collect();
        let c = best_split(&rows, 0, &data, &cfg(2, 0.5)).unwrap();
        assert_eq!(c.theta_hat, xs[3]);
        assert_eq!((c.n_minus, c.n_plus), (4, 5));
    }

    #[test]
    fn try_split_decisions() {
        let xs: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0).collect();
        let flat = line_data(&xs, &[0.0; 8]);
        let rows: Vec<usize> = (0..8).collect();
        let c = cfg(2, 0.25);
        let mut state = GacState::default();
        assert!(matches!(try_split(&rows, 0, &flat, &c, 1.0, &mut state), SplitDecision::Rejected(_)));
        assert!(state.unlocked.is_empty());
        state.unlocked.insert(0);
        assert!(matches!(try_split(&rows, 0, &flat, &c, 1.0, &mut state), SplitDecision::Accepted(_)));

        let step = line_data(&xs, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let mut fresh = GacState::default();
        // balanced split with delta = 1 scores exactly 1
        assert!(matches!(try_split(&rows, 0, &step, &c, 1.0, &mut fresh), SplitDecision::Accepted(_)));
        assert!(fresh.unlocked.contains(&0));
        let mut fresh = GacState::default();
        assert!(matches!(
            try_split(&rows, 0, &step, &c, 1.0 + 1e-12, &mut fresh),
            SplitDecision::Rejected(_)
        ));

        let tiny = line_data(&xs[..3], &[0.0; 3]);
        assert_eq!(
            try_split(&[0, 1, 2], 0, &tiny, &c, 0.0, &mut fresh),
            SplitDecision::Inadmissible
        );
    }

    #[test]
    fn small_dataset_is_a_single_leaf() {
        let data = line_data(&[0.1, 0.4, 0.9], &[1.0, 2.0, 3.0]);
        let t = train_tree(&data, &cfg(2, 0.25), &mut rng_from_seed(0)).unwrap();
        assert_eq!(t.partition().len(), 1);
        assert_eq!(t.predict(&[0.5]), 2.0);
        assert!(matches!(
            train_tree(&data, &cfg(4, 0.25), &mut rng_from_seed(0)),
            Err(Error::DatasetTooSmall(_))
        ));
    }

    #[test]
    fn override_threshold_unlocks_and_splits() {
        let n = 400;
        let mut rng = rng_from_seed(3);
        let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|i| if x[2 * i] > 0.5 { 1.0 } else { -1.0 }).collect();
        let data = Dataset::new(2, x, y, None).unwrap();
        let mut c = cfg(20, 0.25);
        c.threshold_override = Some(0.5);
        let (tree, trace) = train_tree_traced(&data, &c, &mut rng_from_seed(1)).unwrap();
        assert!(trace.unlocked.contains(&0));
        assert!(tree.partition().leaves().len() > 1);
        assert!(tree.partition().validate(&data).is_ok());
        let first = trace.attempts.iter().find(|a| a.outcome == Outcome::Accepted).unwrap();
        assert_eq!(first.axis, 0);
    }

    #[test]
    fn forests_are_reproducible() {
        let mut rng = rng_from_seed(9);
        let x: Vec<f64> = (0..600).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..200).map(|i| x[3 * i] + x[3 * i + 1]).collect();
        let data = Dataset::new(3, x, y, None).unwrap();
        let mut c = GacConfig::new(10, 0.5, 2.0, 4, 42).unwrap();
        c.threshold_override = Some(0.0);
        let a = train_forest(&data, &c).unwrap();
        let b = train_forest(&data, &c).unwrap();
        assert_eq!(a, b);
        for t in a.trees() {
            assert!(t.partition().validate(&data).is_ok());
        }
    }

    #[test]
    fn config_validation() {
        assert!(GacConfig::new(0, 0.25, 1.0, 1, 0).is_err());
        assert!(GacConfig::new(1, 0.6, 1.0, 1, 0).is_err());
        assert!(GacConfig::new(1, 0.25, 1.0, 0, 0).is_err());
        assert!(GacConfig::new(1, 0.25, 0.0, 1, 0).is_err());
    }
}
