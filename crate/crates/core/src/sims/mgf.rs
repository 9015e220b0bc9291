//! Moment generating function of `Y - Y|Z|` for a fair sign `Y` and a
//! standard normal `Z`, against the bound `exp((1 - sqrt(2/pi)) t^2)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seed::stream;
use crate::sims::{to_value, Check, ExperimentReport};

/// `1 - sqrt(2/pi)`.
pub const MGF_COEFFICIENT: f64 = 1.0 - 0.797_884_560_802_865_4;

/// Largest `|t|` the check is run at.
pub const MAX_T: f64 = 0.5;

pub fn mgf_bound(t: f64) -> f64 {
    (MGF_COEFFICIENT * t * t).exp()
}

/// Closed form `e^{t^2/2} (e^t Phi(-t) + e^{-t} Phi(t))`.
pub fn mgf_exact(t: f64) -> f64 {
    let phi = Normal::standard();
    (t * t / 2.0).exp() * (t.exp() * phi.cdf(-t) + (-t).exp() * phi.cdf(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgfRow {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub exact: f64,
    pub within_bound: bool,
}

/// Monte Carlo estimate per `t`; each `t` uses its own stream of `seed`.
pub fn mgf_check(t_values: &[f64], n_samples: usize, seed: u64) -> Result<ExperimentReport> {
    if let Some(t) = t_values.iter().find(|t| !(t.abs() <= MAX_T)) {
        return Err(Error::InvalidParams(format!("|t| must be at most {MAX_T}, got {t}")));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParams("need at least two samples".into()));
    }
    let rows: Vec<MgfRow> = t_values
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut rng = stream(seed, i as u64);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n_samples {
                let y: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let z: f64 = rng.sample(StandardNormal);
                let v = (t * (y - y * z.abs())).exp();
                sum += v;
                sum_sq += v * v;
            }
            let n = n_samples as f64;
            let estimate = sum / n;
            let var = ((sum_sq - n * estimate * estimate) / (n - 1.0)).max(0.0);
            let stderr = (var / n).sqrt();
            let bound = mgf_bound(t);
            MgfRow {
                t,
                estimate,
                stderr,
                bound,
                exact: mgf_exact(t),
                within_bound: estimate <= bound * (1.0 + 3.0 * stderr),
            }
        })
        .collect();
    let checks = rows
        .iter()
        .map(|r| Check::at_most(&format!("estimate_at_t={}", r.t), r.estimate, r.bound * (1.0 + 3.0 * r.stderr)))
        .collect();
    Ok(ExperimentReport {
        experiment: "mgf".into(),
        master_seed: seed,
        spec: serde_json::json!({ "t_values": t_values, "n_samples": n_samples }),
        aggregate: serde_json::json!({ "coefficient": MGF_COEFFICIENT }),
        replicates: rows.iter().map(to_value).collect(),
        checks,
        notes: vec![],
    })
}
