//! Oracles shared by integration tests.

use std::collections::BTreeMap;

/// Distinct non-degenerate intervals `(lo, hi)` in grain units (`1/g`
/// units span the cube), each with the largest `tau` producing it.
/// Requires `1/g` and `w/g` to be integers.
pub fn brute_intervals(s: usize, w: f64, eps: f64) -> BTreeMap<(u64, u64), u32> {
    let g = w * eps / (2.0 * s as f64);
    let unit = (1.0 / g).round() as u64;
    let base = (w / g).round() as u64;
    assert!(((1.0 / g) - unit as f64).abs() < 1e-9 && ((w / g) - base as f64).abs() < 1e-9);
    let mut tau_max = 0;
    while (1u64 << (tau_max + 1)) as f64 * w <= 1.0 + 1e-12 {
        tau_max += 1;
    }
    let b_max = (2.0 * s as f64 / eps - 1e-9).ceil() as u64;
    let mut out = BTreeMap::new();
    for tau in 0..=tau_max {
        let step = 1u64 << tau;
        let a_max = ((2.0f64.powi(1 - tau as i32) * s as f64 / (w * eps)) + 1e-9).floor() as u64;
        for a in 0..=a_max {
            for b in 0..=b_max {
                let lo = a * step;
                if lo >= unit {
                    continue;
                }
                let hi = ((a + b) * step + step * base).min(unit);
                let e = out.entry((lo, hi)).or_insert(tau);
                *e = (*e).max(tau);
            }
        }
    }
    out
}
