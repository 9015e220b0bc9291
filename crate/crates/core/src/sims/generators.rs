//! Sparse-signal data: uniform features, a mean function of a few signal
//! axes, and bounded noise keeping `|Y| <= M`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Dataset, Rectangle};
use crate::trees::FeatureSampler;
use crate::seed::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// `beta * sigma * (1{x_q > 1/2} - 1/2)` on a single axis.
    Step,
    /// Sum of single-axis steps.
    AdditiveStep,
    /// `sum_j 2 beta sigma_j (x_j - 1/2)`, Lipschitz with constant `2 beta`.
    Ramp,
    /// `c` everywhere, regardless of the signal axes.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Uniform on `[-(M - sup|f|), M - sup|f|]`.
    Uniform,
    /// `Y = ±M` with equal probability; only for a zero mean function.
    Rademacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub axes: Vec<usize>,
    pub beta: f64,
    pub signs: Vec<f64>,
    pub kind: SignalKind,
    pub m: f64,
    pub noise: NoiseKind,
}

impl SignalSpec {
    /// Signal on the first `q` axes with all signs positive.
    pub fn leading(q: usize, beta: f64, kind: SignalKind, m: f64) -> Self {
        SignalSpec {
            axes: (0..q).collect(),
            beta,
            signs: vec![1.0; q],
            kind,
            m,
            noise: NoiseKind::Uniform,
        }
    }

    /// `Y = ±M` independent of `X`.
    pub fn rademacher(m: f64) -> Self {
        SignalSpec {
            axes: vec![],
            beta: 0.0,
            signs: vec![],
            kind: SignalKind::AdditiveStep,
            m,
            noise: NoiseKind::Rademacher,
        }
    }

    pub fn q(&self) -> usize {
        self.axes.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if self.axes.iter().any(|&j| j >= d) {
            return bad(format!("signal axes must be below d = {d}"));
        }
        let mut sorted = self.axes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.axes.len() {
            return bad("signal axes must be distinct".into());
        }
        if self.signs.len() != self.axes.len() || self.signs.iter().any(|s| s.abs() != 1.0) {
            return bad("need one sign of ±1 per signal axis".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) || !(self.m >= 0.0 && self.m.is_finite()) {
            return bad("beta and M must be finite and non-negative".into());
        }
        if self.kind == SignalKind::Step && self.q() > 1 {
            return bad("a step signal has at most one axis".into());
        }
        let sup = self.sup_abs();
        if sup > self.m {
            return bad(format!("sup |f| = {sup} exceeds M = {}", self.m));
        }
        if self.noise == NoiseKind::Rademacher && sup > 0.0 {
            return bad("Rademacher noise needs a zero mean function".into());
        }
        Ok(())
    }

    /// `sup_x |f(x)|`.
    pub fn sup_abs(&self) -> f64 {
        let q = self.q() as f64;
        match self.kind {
            SignalKind::Step | SignalKind::AdditiveStep => q * self.beta / 2.0,
            SignalKind::Ramp => q * self.beta,
            SignalKind::Constant(c) => c.abs(),
        }
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        match self.kind {
            SignalKind::Step | SignalKind::AdditiveStep => self
                .axes
                .iter()
                .zip(&self.signs)
                .map(|(&j, s)| self.beta * s * (if x[j] > 0.5 { 0.5 } else { -0.5 }))
                .sum(),
            SignalKind::Ramp => self
                .axes
                .iter()
                .zip(&self.signs)
                .map(|(&j, s)| 2.0 * self.beta * s * (x[j] - 0.5))
                .sum(),
            SignalKind::Constant(c) => c,
        }
    }

    /// `E[f(X) | X in r]` for uniform `X`.
    pub fn rect_mean(&self, r: &Rectangle) -> f64 {
        match self.kind {
            SignalKind::Step | SignalKind::AdditiveStep => self
                .axes
                .iter()
                .zip(&self.signs)
                .map(|(&j, s)| {
                    let (lo, hi) = (r.lo()[j], r.hi()[j]);
                    let above = (hi - lo.max(0.5)).max(0.0) / (hi - lo);
                    self.beta * s * (above - 0.5)
                })
                .sum(),
            SignalKind::Ramp => self
                .axes
                .iter()
                .zip(&self.signs)
                .map(|(&j, s)| 2.0 * self.beta * s * (0.5 * (r.lo()[j] + r.hi()[j]) - 0.5))
                .sum(),
            SignalKind::Constant(c) => c,
        }
    }

    fn noise_half_width(&self) -> f64 {
        (self.m - self.sup_abs()).max(0.0)
    }

    /// One response for features `x`.
    pub fn draw_y<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        match self.noise {
            NoiseKind::Rademacher => {
                if rng.random_bool(0.5) {
                    self.m
                } else {
                    -self.m
                }
            }
            NoiseKind::Uniform => {
                let h = self.noise_half_width();
                let u = if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
                self.mean(x) + u
            }
        }
    }
}

/// Uniform features on `[0,1]^d`.
pub struct UniformFeatures;

impl FeatureSampler for UniformFeatures {
    fn sample(&self, rng: &mut SimRng, out: &mut [f64]) {
        for v in out {
            *v = rng.random();
        }
    }
}

/// `n` rows of uniform features and responses from `spec`; `M` is recorded
/// as the dataset's response bound.
pub fn gen_sparse(spec: &SignalSpec, n: usize, d: usize, rng: &mut SimRng) -> Result<Dataset> {
    spec.validate(d)?;
    let mut x = vec![0.0; n * d];
    let mut y = Vec::with_capacity(n);
    for row in x.chunks_mut(d) {
        for v in row.iter_mut() {
            *v = rng.random();
        }
        y.push(spec.draw_y(row, rng));
    }
    Dataset::new(d, x, y, Some(spec.m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn pure_noise_ignores_features() {
        let spec = SignalSpec::leading(0, 1.0, SignalKind::AdditiveStep, 1.0);
        let data = gen_sparse(&spec, 200, 3, &mut rng_from_seed(1)).unwrap();
        assert!(data.y().iter().all(|y| y.abs() <= 1.0));
        assert_eq!(spec.mean(&[0.9, 0.9, 0.9]), 0.0);
        let r = gen_sparse(&SignalSpec::rademacher(2.0), 100, 2, &mut rng_from_seed(1)).unwrap();
        assert!(r.y().iter().all(|y| y.abs() == 2.0));
    }

    #[test]
    fn step_gap_is_beta() {
        let spec = SignalSpec::leading(1, 0.8, SignalKind::Step, 1.0);
        assert!((spec.mean(&[0.6]) - spec.mean(&[0.4]) - 0.8).abs() < 1e-15);
        let upper = Rectangle::new(vec![0.5], vec![1.0]).unwrap();
        let lower = Rectangle::new(vec![0.0], vec![0.5]).unwrap();
        assert!((spec.rect_mean(&upper) - spec.rect_mean(&lower) - 0.8).abs() < 1e-15);
        assert_eq!(spec.rect_mean(&Rectangle::unit(1)), 0.0);
    }

    #[test]
    fn empirical_gap_matches_beta() {
        let beta = 0.6;
        let spec = SignalSpec::leading(1, beta, SignalKind::Step, 1.0);
        let data = gen_sparse(&spec, 100_000, 2, &mut rng_from_seed(5)).unwrap();
        let (mut hi, mut lo) = (Vec::new(), Vec::new());
        for i in 0..data.n() {
            if data.feature(i, 0) > 0.5 {
                hi.push(data.y()[i]);
            } else {
                lo.push(data.y()[i]);
            }
        }
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (m, var / v.len() as f64)
        };
        let (mh, vh) = stats(&hi);
        let (ml, vl) = stats(&lo);
        let se = (vh + vl).sqrt();
        assert!((mh - ml - beta).abs() < 3.0 * se, "gap {} se {se}", mh - ml);
    }

    #[test]
    fn ramp_rect_mean_is_midpoint_value() {
        let spec = SignalSpec::leading(2, 0.25, SignalKind::Ramp, 1.0);
        let r = Rectangle::new(vec![0.2, 0.0], vec![0.6, 0.5]).unwrap();
        assert!((spec.rect_mean(&r) - spec.mean(&[0.4, 0.25])).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs() {
        let too_big = SignalSpec::leading(2, 1.5, SignalKind::AdditiveStep, 1.0);
        assert!(matches!(too_big.validate(3), Err(Error::SpecInvalid(_))));
        let outside = SignalSpec::leading(3, 0.1, SignalKind::Ramp, 1.0);
        assert!(outside.validate(2).is_err());
        let step2 = SignalSpec::leading(2, 0.1, SignalKind::Step, 1.0);
        assert!(step2.validate(3).is_err());
    }
}
