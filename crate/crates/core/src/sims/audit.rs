//! How guess-and-check forests treat noise and signal axes.
//!
//! Per seed a sparse-signal dataset is drawn and a forest trained. `pi_bad`
//! is the fraction of seeds whose forest splits on any noise axis anywhere;
//! `pi_j` is, over all trees that scored axis `j` at least once, the fraction
//! whose first scored attempt on `j` was accepted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::Result;
use crate::gac::{train_forest_traced, GacConfig, Outcome, DEFAULT_MAX_ATTEMPTS};
use crate::seed::{derive_seed, stream};
use crate::sims::generators::{gen_sparse, SignalKind, SignalSpec};
use crate::sims::{to_value, Check, ExperimentReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSpec {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub k: usize,
    pub alpha: f64,
    pub m: f64,
    pub beta: f64,
    pub b: usize,
    pub n_seeds: usize,
    pub kind: SignalKind,
    pub max_attempts_per_node: usize,
    pub threshold_override: Option<f64>,
    pub max_pi_bad: f64,
    pub min_pi_signal: f64,
}

impl AuditSpec {
    pub fn new(n: usize, d: usize, q: usize, k: usize, alpha: f64, m: f64, beta: f64, b: usize, n_seeds: usize) -> Self {
        AuditSpec {
            n,
            d,
            q,
            k,
            alpha,
            m,
            beta,
            b,
            n_seeds,
            kind: SignalKind::AdditiveStep,
            max_attempts_per_node: DEFAULT_MAX_ATTEMPTS,
            threshold_override: None,
            max_pi_bad: 0.05,
            min_pi_signal: 0.9,
        }
    }

    fn signal(&self) -> SignalSpec {
        let kind = if self.q == 1 && self.kind == SignalKind::AdditiveStep {
            SignalKind::Step
        } else {
            self.kind
        };
        SignalSpec::leading(self.q, self.beta, kind, self.m)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SeedAudit {
    any_noise_split: bool,
    noise_split_trees: usize,
    total_splits: usize,
    threshold: f64,
    attempted: Vec<usize>,
    first_success: Vec<usize>,
}

fn audit_seed(spec: &AuditSpec, seed: u64, s: usize) -> Result<SeedAudit> {
    let mut rng = stream(seed, s as u64);
    let signal = spec.signal();
    let data = gen_sparse(&signal, spec.n, spec.d, &mut rng)?;
    let mut cfg = GacConfig::new(spec.k, spec.alpha, spec.m, spec.b, derive_seed(seed, (1 << 32) + s as u64))?;
    cfg.max_attempts_per_node = spec.max_attempts_per_node;
    cfg.threshold_override = spec.threshold_override;
    let (_, traces) = train_forest_traced(&data, &cfg)?;

    let is_signal = |j: usize| signal.axes.contains(&j);
    let mut out = SeedAudit {
        any_noise_split: false,
        noise_split_trees: 0,
        total_splits: 0,
        threshold: traces.first().map_or(f64::NAN, |t| t.threshold),
        attempted: vec![0; spec.q],
        first_success: vec![0; spec.q],
    };
    for tr in &traces {
        let axes = tr.split_axes();
        out.total_splits += axes.len();
        if axes.iter().any(|&j| !is_signal(j)) {
            out.noise_split_trees += 1;
        }
        for a in tr.attempts.iter().filter(|a| a.first_on_axis) {
            if let Some(pos) = signal.axes.iter().position(|&j| j == a.axis) {
                out.attempted[pos] += 1;
                if a.outcome == Outcome::Accepted {
                    out.first_success[pos] += 1;
                }
            }
        }
    }
    out.any_noise_split = out.noise_split_trees > 0;
    Ok(out)
}

pub fn noise_split_audit(spec: &AuditSpec, seed: u64) -> Result<ExperimentReport> {
    let seeds: Vec<SeedAudit> = (0..spec.n_seeds)
        .into_par_iter()
        .map(|s| audit_seed(spec, seed, s))
        .collect::<Result<_>>()?;

    let pi_bad = seeds.iter().filter(|s| s.any_noise_split).count() as f64 / spec.n_seeds.max(1) as f64;
    let mut checks = vec![Check::at_most("pi_bad", pi_bad, spec.max_pi_bad)];
    let mut pi_signal = Vec::new();
    for pos in 0..spec.q {
        let attempted: usize = seeds.iter().map(|s| s.attempted[pos]).sum();
        let success: usize = seeds.iter().map(|s| s.first_success[pos]).sum();
        let pi = if attempted > 0 { success as f64 / attempted as f64 } else { f64::NAN };
        let mut c = Check::at_least(&format!("pi_axis_{pos}"), pi, spec.min_pi_signal);
        c.passed = pi >= spec.min_pi_signal;
        checks.push(c);
        pi_signal.push(serde_json::json!({
            "axis": pos,
            "trees_attempted": attempted,
            "first_attempt_accepted": success,
            "pi": pi,
        }));
    }

    let replicates = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = Map::new();
            row.insert("seed_index".into(), i.into());
            row.insert("any_noise_split".into(), s.any_noise_split.into());
            row.insert("noise_split_trees".into(), s.noise_split_trees.into());
            row.insert("total_splits".into(), s.total_splits.into());
            row.insert("threshold".into(), to_value(&s.threshold));
            for pos in 0..spec.q {
                row.insert(format!("attempted_axis_{pos}"), s.attempted[pos].into());
                row.insert(format!("first_success_axis_{pos}"), s.first_success[pos].into());
            }
            Value::Object(row)
        })
        .collect();

    let max_score_possible = (2.0 * spec.m).powi(2);
    let threshold = seeds.first().map_or(f64::NAN, |s| s.threshold);
    let mut notes = Vec::new();
    if threshold > max_score_possible {
        notes.push(format!(
            "split threshold {threshold:.4} exceeds (2M)^2 = {max_score_possible:.4}, the largest score any split \
             can reach with |Y| <= M; no locked axis can ever unlock at this configuration"
        ));
    }
    Ok(ExperimentReport {
        experiment: "audit".into(),
        master_seed: seed,
        spec: to_value(spec),
        aggregate: serde_json::json!({
            "pi_bad": pi_bad,
            "signal_axes": pi_signal,
            "split_threshold": threshold,
            "max_possible_score": max_score_possible,
        }),
        replicates,
        checks,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_noise_axes_means_no_bad_splits() {
        let mut spec = AuditSpec::new(400, 2, 2, 20, 0.25, 1.0, 0.5, 3, 2);
        spec.threshold_override = Some(0.0);
        let r = noise_split_audit(&spec, 5).unwrap();
        assert_eq!(r.aggregate["pi_bad"].as_f64(), Some(0.0));
    }

    #[test]
    fn strong_signal_unlocks_with_a_reachable_threshold() {
        let mut spec = AuditSpec::new(2000, 5, 1, 50, 0.25, 1.0, 1.0, 5, 3);
        spec.threshold_override = Some(0.5);
        let r = noise_split_audit(&spec, 7).unwrap();
        assert_eq!(r.check("pi_axis_0").unwrap().observed, 1.0);
        assert_eq!(r.check("pi_bad").unwrap().observed, 0.0);
    }

    #[test]
    fn unreachable_threshold_is_noted() {
        let spec = AuditSpec::new(500, 10, 1, 50, 0.25, 1.0, 1.0, 2, 1);
        let r = noise_split_audit(&spec, 1).unwrap();
        assert!(!r.notes.is_empty());
        assert_eq!(r.replicates[0]["total_splits"].as_u64(), Some(0));
    }
}
