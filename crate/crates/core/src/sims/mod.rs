//! Data generators and the verification experiments.
//!
//! Every experiment takes a master seed; replicate `r` draws from
//! `stream(master, r)`, replicates run in parallel and are merged by index,
//! so a report is a pure function of its inputs.

pub mod audit;
pub mod concentration;
pub mod consistency;
pub mod generators;
pub mod lowerbound;
pub mod mgf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use audit::{noise_split_audit, AuditSpec};
pub use concentration::{concentration_experiment, ConcentrationSpec};
pub use consistency::{consistency_experiment, ConsistencyKind, ConsistencySpec};
pub use generators::{gen_sparse, NoiseKind, SignalKind, SignalSpec};
pub use lowerbound::{coupled_max_statistics, lowerbound_construct, lowerbound_experiment, LowerBoundSpec};
pub use mgf::{mgf_check, mgf_exact, MGF_COEFFICIENT};

/// A pass/fail comparison recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub required: f64,
    /// How `observed` is compared with `required`, e.g. `">="`.
    pub relation: String,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: &str, observed: f64, required: f64) -> Self {
        Check {
            name: name.into(),
            observed,
            required,
            relation: ">=".into(),
            passed: observed >= required,
        }
    }

    pub fn at_most(name: &str, observed: f64, required: f64) -> Self {
        Check {
            name: name.into(),
            observed,
            required,
            relation: "<=".into(),
            passed: observed <= required,
        }
    }

    pub fn within(name: &str, observed: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            observed,
            required: lo,
            relation: format!("in [{lo}, {hi}]"),
            passed: observed >= lo && observed <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub master_seed: u64,
    pub spec: Value,
    /// One flat object per replicate, in replicate order.
    pub replicates: Vec<Value>,
    pub aggregate: Value,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::io::to_json_string(self)
    }

    /// Replicate table as CSV; columns are the union of replicate keys in
    /// sorted order, nested values are written as JSON.
    pub fn summary_csv(&self) -> Result<String> {
        let mut columns: Vec<String> = self
            .replicates
            .iter()
            .filter_map(Value::as_object)
            .flat_map(|o| o.keys().cloned())
            .collect();
        columns.sort();
        columns.dedup();
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(&columns).map_err(csv_err)?;
        for rep in &self.replicates {
            let row: Vec<String> = columns
                .iter()
                .map(|c| match rep.get(c) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(Value::Number(n)) => match n.as_f64() {
                        Some(f) if n.is_f64() => format!("{f:.16e}"),
                        _ => n.to_string(),
                    },
                    Some(v) => v.to_string(),
                })
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
    }
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("experiment records serialize")
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
