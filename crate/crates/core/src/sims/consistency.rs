//! Error of median-split guess-and-check forests as `n` grows.
//!
//! `k(n) = round(n^e)` with `e = ln(xi) / ln(2 xi)` and `xi = 1/(1 - 3/(4q))`.
//! Every run records both the sup error over a fixed grid on the signal
//! axes and the mean squared excess error on fixed test points; `kind`
//! decides which of them is checked.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gac::{train_forest, GacConfig};
use crate::seed::{derive_seed, stream};
use crate::sims::generators::{gen_sparse, SignalKind, SignalSpec};
use crate::sims::{to_value, Check, ExperimentReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyKind {
    Uniform,
    L2Rate,
}

impl std::str::FromStr for ConsistencyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ConsistencyKind::Uniform),
            "l2_rate" | "l2-rate" | "l2" => Ok(ConsistencyKind::L2Rate),
            other => Err(Error::InvalidParams(format!("unknown consistency kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySpec {
    pub kind: ConsistencyKind,
    pub n_grid: Vec<usize>,
    pub d: usize,
    pub q: usize,
    pub beta: f64,
    pub m: f64,
    pub alpha: f64,
    pub b: usize,
    pub n_seeds: usize,
    pub signal: SignalKind,
    /// Explicit `k` per grid entry instead of the rate schedule.
    pub k_override: Option<Vec<usize>>,
    pub threshold_override: Option<f64>,
    pub grid_points: usize,
    pub test_points: usize,
    pub min_decreasing_fraction: f64,
    pub slope_range: (f64, f64),
}

impl ConsistencySpec {
    pub fn new(kind: ConsistencyKind, n_grid: Vec<usize>, q: usize) -> Self {
        ConsistencySpec {
            kind,
            n_grid,
            d: 20,
            q,
            beta: 0.25,
            m: 1.0,
            alpha: 0.5,
            b: 10,
            n_seeds: 10,
            signal: SignalKind::Ramp,
            k_override: None,
            threshold_override: None,
            grid_points: 400,
            test_points: 2000,
            min_decreasing_fraction: 0.8,
            slope_range: (-0.65, -0.20),
        }
    }

    pub fn k_for(&self, idx: usize) -> usize {
        match &self.k_override {
            Some(ks) => ks[idx],
            None => rate_k(self.n_grid[idx], self.q),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 2 {
            return Err(Error::InvalidParams("the n grid needs at least two values".into()));
        }
        if self.q == 0 || self.q > self.d {
            return Err(Error::InvalidParams(format!("need 1 <= q <= d, got q = {}", self.q)));
        }
        if let Some(ks) = &self.k_override {
            if ks.len() != self.n_grid.len() {
                return Err(Error::InvalidParams("one k per grid value".into()));
            }
        }
        if self.kind == ConsistencyKind::L2Rate && self.alpha != 0.5 {
            return Err(Error::InvalidParams("the L2 rate experiment uses the median variant (alpha = 0.5)".into()));
        }
        Ok(())
    }
}

/// `xi = 1 / (1 - 3/(4q))`.
pub fn xi(q: usize) -> f64 {
    1.0 / (1.0 - 3.0 / (4.0 * q as f64))
}

/// `ln(xi) / ln(2 xi)`.
pub fn rate_exponent(q: usize) -> f64 {
    let x = xi(q);
    x.ln() / (2.0 * x).ln()
}

pub fn rate_k(n: usize, q: usize) -> usize {
    ((n as f64).powf(rate_exponent(q)).round() as usize).max(1)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Midpoint grid on the signal axes (about `points` nodes), other
/// coordinates drawn once from `seed`.
fn evaluation_grid(spec: &ConsistencySpec, signal: &SignalSpec, seed: u64) -> Vec<Vec<f64>> {
    let per_axis = ((spec.grid_points as f64).powf(1.0 / spec.q as f64).round() as usize).max(1);
    let total = per_axis.pow(spec.q as u32);
    let mut rng = stream(seed, u64::MAX);
    (0..total)
        .map(|mut idx| {
            let mut x: Vec<f64> = (0..spec.d).map(|_| rng.random()).collect();
            for &j in &signal.axes {
                x[j] = ((idx % per_axis) as f64 + 0.5) / per_axis as f64;
                idx /= per_axis;
            }
            x
        })
        .collect()
}

fn test_points(spec: &ConsistencySpec, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, u64::MAX - 1);
    (0..spec.test_points)
        .map(|_| (0..spec.d).map(|_| rng.random()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRun {
    pub seed_index: usize,
    pub n: usize,
    pub k: usize,
    pub sup_error: f64,
    pub mse: f64,
    pub mean_leaves: f64,
}

pub fn consistency_experiment(spec: &ConsistencySpec, seed: u64) -> Result<ExperimentReport> {
    spec.validate()?;
    let signal = SignalSpec::leading(spec.q, spec.beta, spec.signal, spec.m);
    signal.validate(spec.d)?;
    let grid = evaluation_grid(spec, &signal, seed);
    let tests = test_points(spec, seed);
    let truth_grid: Vec<f64> = grid.iter().map(|x| signal.mean(x)).collect();
    let truth_test: Vec<f64> = tests.iter().map(|x| signal.mean(x)).collect();

    let jobs: Vec<(usize, usize)> = (0..spec.n_seeds)
        .flat_map(|s| (0..spec.n_grid.len()).map(move |i| (s, i)))
        .collect();
    let runs: Vec<ConsistencyRun> = jobs
        .into_par_iter()
        .map(|(s, i)| {
            let n = spec.n_grid[i];
            let k = spec.k_for(i);
            let run_seed = derive_seed(derive_seed(seed, s as u64), i as u64);
            let mut rng = stream(run_seed, 0);
            let data = gen_sparse(&signal, n, spec.d, &mut rng)?;
            let mut cfg = GacConfig::new(k, spec.alpha, spec.m, spec.b, derive_seed(run_seed, 1))?;
            cfg.threshold_override = spec.threshold_override;
            let forest = train_forest(&data, &cfg)?;
            let sup_error = grid
                .iter()
                .zip(&truth_grid)
                .map(|(x, f)| (forest.predict(x) - f).abs())
                .fold(0.0, f64::max);
            let mse = tests
                .iter()
                .zip(&truth_test)
                .map(|(x, f)| (forest.predict(x) - f).powi(2))
                .sum::<f64>()
                / tests.len() as f64;
            let mean_leaves = forest.trees().iter().map(|t| t.partition().leaves().len()).sum::<usize>() as f64
                / forest.len() as f64;
            Ok(ConsistencyRun {
                seed_index: s,
                n,
                k,
                sup_error,
                mse,
                mean_leaves,
            })
        })
        .collect::<Result<_>>()?;

    let g = spec.n_grid.len();
    let per_seed = |s: usize| &runs[s * g..(s + 1) * g];
    let decreasing = (0..spec.n_seeds)
        .filter(|&s| per_seed(s).windows(2).all(|w| w[1].sup_error < w[0].sup_error))
        .count();
    let decreasing_fraction = decreasing as f64 / spec.n_seeds.max(1) as f64;
    let mean_mse: Vec<f64> = (0..g)
        .map(|i| (0..spec.n_seeds).map(|s| per_seed(s)[i].mse).sum::<f64>() / spec.n_seeds as f64)
        .collect();
    let log_n: Vec<f64> = spec.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let log_mse: Vec<f64> = mean_mse.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&log_n, &log_mse);

    let checks = match spec.kind {
        ConsistencyKind::Uniform => vec![Check::at_least(
            "sup_error_strictly_decreasing_fraction",
            decreasing_fraction,
            spec.min_decreasing_fraction,
        )],
        ConsistencyKind::L2Rate => vec![Check::within(
            "mse_log_log_slope",
            slope,
            spec.slope_range.0,
            spec.slope_range.1,
        )],
    };
    let mean_leaves: f64 = runs.iter().map(|r| r.mean_leaves).sum::<f64>() / runs.len() as f64;
    let mut notes = Vec::new();
    if mean_leaves <= 1.0 {
        notes.push(
            "no tree split in any run: the split threshold is above every achievable score, so each forest \
             predicts the sample mean"
                .to_string(),
        );
    }
    Ok(ExperimentReport {
        experiment: "consistency".into(),
        master_seed: seed,
        spec: serde_json::json!({
            "spec": to_value(spec),
            "k_schedule": (0..g).map(|i| spec.k_for(i)).collect::<Vec<_>>(),
            "rate_exponent": rate_exponent(spec.q),
        }),
        aggregate: serde_json::json!({
            "sup_error_strictly_decreasing_fraction": decreasing_fraction,
            "mean_mse": mean_mse,
            "mse_log_log_slope": slope,
            "target_slope": -rate_exponent(spec.q),
            "mean_leaves_per_tree": mean_leaves,
        }),
        replicates: runs.iter().map(to_value).collect(),
        checks,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_schedule() {
        assert!((xi(2) - 1.6).abs() < 1e-15);
        assert!((rate_exponent(2) - 0.404).abs() < 5e-4);
        assert_eq!(rate_k(2000, 2), 22);
        assert_eq!(rate_k(8000, 2), 38);
        assert_eq!(rate_k(32000, 2), 66);
    }

    #[test]
    fn slope_of_a_power_law() {
        let xs: Vec<f64> = [1.0f64, 2.0, 4.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = [1.0f64, 0.5, 0.25].iter().map(|v| v.ln()).collect();
        assert!((ols_slope(&xs, &ys) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_error_is_mean_offset() {
        let mut spec = ConsistencySpec::new(ConsistencyKind::Uniform, vec![200, 800], 1);
        spec.signal = SignalKind::Constant(0.3);
        spec.d = 2;
        spec.n_seeds = 1;
        spec.b = 2;
        spec.grid_points = 10;
        spec.test_points = 10;
        let r = consistency_experiment(&spec, 3).unwrap();
        for run in &r.replicates {
            let sup = run["sup_error"].as_f64().unwrap();
            assert!(sup < 0.2, "{sup}");
        }
    }

    #[test]
    fn splits_reduce_error_with_a_reachable_threshold() {
        let mut spec = ConsistencySpec::new(ConsistencyKind::L2Rate, vec![500, 4000], 2);
        spec.d = 3;
        spec.n_seeds = 2;
        spec.b = 3;
        spec.beta = 0.5;
        spec.threshold_override = Some(0.0);
        let r = consistency_experiment(&spec, 8).unwrap();
        let mse = r.aggregate["mean_mse"].as_array().unwrap();
        assert!(mse[1].as_f64().unwrap() < mse[0].as_f64().unwrap());
    }
}
