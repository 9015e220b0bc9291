//! Closed-form concentration bounds and post-selection leaf intervals.
//!
//! All logarithms here are natural logarithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::NodeId;
use crate::trees::ValidTree;

/// Problem size and constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub alpha: f64,
    pub m: f64,
    pub zeta: f64,
}

impl BoundParams {
    /// `alpha` may be `0.5` for the median-split trainer; `zeta` defaults to 1
    /// at call sites that do not know the feature density.
    pub fn new(n: usize, d: usize, k: usize, alpha: f64, m: f64, zeta: f64) -> Result<Self> {
        if n == 0 || d == 0 || k == 0 {
            return Err(Error::InvalidParams(format!("n, d, k must be positive (n={n}, d={d}, k={k})")));
        }
        if k > n {
            return Err(Error::InvalidParams(format!("k = {k} exceeds n = {n}")));
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 0.5], got {alpha}")));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::InvalidParams(format!("M must be finite and >= 0, got {m}")));
        }
        if !(zeta >= 1.0 && zeta.is_finite()) {
            return Err(Error::InvalidParams(format!("zeta must be >= 1, got {zeta}")));
        }
        Ok(BoundParams { n, d, k, alpha, m, zeta })
    }

    fn log_inv_one_minus_alpha(&self) -> f64 {
        -(1.0 - self.alpha).ln()
    }

    /// `ln(n) * max(ln d, ln ln n) / k`; the leaf-size assumption asks for this
    /// to vanish, so values well below 1 mean the asymptotic regime is plausible.
    pub fn leaf_size_ratio(&self) -> f64 {
        let n = self.n as f64;
        let lnln = if n > std::f64::consts::E { n.ln().ln() } else { 0.0 };
        n.ln() * (self.d as f64).ln().max(lnln) / self.k as f64
    }

    /// Diagnostic text when the leaf-size ratio is not small. Never an error.
    pub fn leaf_size_warning(&self) -> Option<String> {
        let r = self.leaf_size_ratio();
        (r >= 1.0).then(|| {
            format!("leaf-size ratio ln(n)·max(ln d, ln ln n)/k = {r:.3} is not small; the bound is asymptotic")
        })
    }
}

/// `9 M sqrt(ln(n) ln(d) / ln(1/(1-alpha))) / sqrt(k)`.
pub fn adaptive_bound(p: &BoundParams) -> f64 {
    let n = p.n as f64;
    let d = p.d as f64;
    9.0 * p.m * (n.ln() * d.ln() / p.log_inv_one_minus_alpha()).sqrt() / (p.k as f64).sqrt()
}

/// `9 M sqrt(ln(n/k) (ln(dk) + 3 ln ln n) / ln(1/(1-alpha))) / sqrt(k)`.
pub fn adaptive_bound_full(p: &BoundParams) -> f64 {
    let (n, d, k) = (p.n as f64, p.d as f64, p.k as f64);
    let inner = (n / k).ln() * ((d * k).ln() + 3.0 * n.ln().ln()) / p.log_inv_one_minus_alpha();
    9.0 * p.m * inner.max(0.0).sqrt() / k.sqrt()
}

/// Single-tree Hoeffding baseline `M sqrt(2.1 ln(n) / k)`.
pub fn nonadaptive_bound(n: usize, k: usize, m: f64) -> f64 {
    m * (2.1 * (n as f64).ln() / k as f64).sqrt()
}

/// Order-of-magnitude generalization rate `sqrt((ln d + ln n) / k)` (constant 1;
/// only the rate is meaningful).
pub fn generalization_rate(n: usize, d: usize, k: usize) -> f64 {
    (((d as f64).ln() + (n as f64).ln()) / k as f64).sqrt()
}

/// Score a split on a locked variable must reach: `(2 * adaptive_bound)^2`.
pub fn split_threshold(p: &BoundParams) -> f64 {
    let a = adaptive_bound(p);
    4.0 * a * a
}

/// Scale and accuracy of the approximating rectangle family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub w: f64,
    pub eps: f64,
}

/// `w = k / (2 zeta n)`, `eps = 1 / sqrt(k)`.
pub fn approx_params(n: usize, k: usize, zeta: f64) -> Result<ApproxParams> {
    if n == 0 || k == 0 || k > n || !(zeta >= 1.0) {
        return Err(Error::InvalidParams(format!("need 1 <= k <= n and zeta >= 1 (n={n}, k={k}, zeta={zeta})")));
    }
    Ok(ApproxParams {
        w: k as f64 / (2.0 * zeta * n as f64),
        eps: 1.0 / (k as f64).sqrt(),
    })
}

/// Leading term of the log-size of the union approximating family:
/// `ln(n/k)(ln(dk) + 3 ln ln n) / ln(1/(1-alpha))`. The lower-order remainder
/// is not included.
pub fn log_cardinality_bound(n: usize, d: usize, k: usize, alpha: f64) -> f64 {
    let (n, d, k) = (n as f64, d as f64, k as f64);
    (n / k).ln() * ((d * k).ln() + 3.0 * n.ln().ln()) / (-(1.0 - alpha).ln())
}

/// Which width formula to use for the leaf envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundVariant {
    Simplified,
    Full,
}

impl BoundVariant {
    pub fn half_width(self, p: &BoundParams) -> f64 {
        match self {
            BoundVariant::Simplified => adaptive_bound(p),
            BoundVariant::Full => adaptive_bound_full(p),
        }
    }
}

impl std::str::FromStr for BoundVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplified" => Ok(BoundVariant::Simplified),
            "full" => Ok(BoundVariant::Full),
            other => Err(Error::InvalidParams(format!("unknown bound variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafInterval {
    pub leaf_id: usize,
    pub count: usize,
    pub mean: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub excludes_zero: bool,
}

/// Leaf means with the uniform post-selection envelope. This is a
/// high-probability concentration envelope, not an interval at a fixed
/// confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosiReport {
    pub label: String,
    pub variant: BoundVariant,
    pub params: BoundParams,
    pub half_width: f64,
    pub leaves: Vec<LeafInterval>,
    pub warnings: Vec<String>,
}

pub const POSI_LABEL: &str = "concentration envelope";

pub fn posi_intervals(tree: &ValidTree, p: &BoundParams, variant: BoundVariant) -> Result<PosiReport> {
    if tree.partition().d() != p.d {
        return Err(Error::InvalidParams(format!(
            "tree has d = {} but parameters say d = {}",
            tree.partition().d(),
            p.d
        )));
    }
    let h = variant.half_width(p);
    let leaves = tree
        .leaf_fits()
        .into_iter()
        .map(|(NodeId(id), fit)| leaf_interval(id, fit.count, fit.mean, h))
        .collect();
    Ok(PosiReport {
        label: POSI_LABEL.to_string(),
        variant,
        params: *p,
        half_width: h,
        leaves,
        warnings: p.leaf_size_warning().into_iter().collect(),
    })
}

pub fn leaf_interval(leaf_id: usize, count: usize, mean: f64, half_width: f64) -> LeafInterval {
    let lower = mean - half_width;
    let upper = mean + half_width;
    LeafInterval {
        leaf_id,
        count,
        mean,
        half_width,
        lower,
        upper,
        excludes_zero: lower > 0.0 || upper < 0.0,
    }
}
