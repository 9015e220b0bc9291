//! Fitted trees, partition-optimal trees and forests.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Dataset, Rectangle};
use crate::partition::{NodeId, Partition};
use crate::seed::{derive_seed, rng_from_seed, SimRng};

/// Count and sample mean of the training responses in a leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafFit {
    pub count: usize,
    pub mean: f64,
}

/// Piecewise-constant predictor returning the leaf sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidTree {
    partition: Partition,
    fits: Vec<Option<LeafFit>>,
}

impl ValidTree {
    /// Fits leaf means on `data`; the partition must be valid for it.
    pub fn fit(partition: Partition, data: &Dataset) -> Result<Self> {
        let verdict = partition.validate(data);
        if !verdict.is_ok() {
            let msg: Vec<String> = verdict.violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidPartition(msg.join("; ")));
        }
        let mut sums = vec![0.0; partition.len()];
        let mut counts = vec![0usize; partition.len()];
        for i in 0..data.n() {
            let leaf = partition.leaf_of(data.row(i));
            sums[leaf.0] += data.y()[i];
            counts[leaf.0] += 1;
        }
        let fits = (0..partition.len())
            .map(|i| {
                partition.nodes()[i].is_leaf().then(|| LeafFit {
                    count: counts[i],
                    mean: sums[i] / counts[i] as f64,
                })
            })
            .collect();
        Ok(ValidTree { partition, fits })
    }

    /// Reassembles a tree from stored leaf statistics (model loading).
    pub fn from_parts(partition: Partition, leaves: Vec<(NodeId, LeafFit)>) -> Result<Self> {
        let mut fits = vec![None; partition.len()];
        for (id, fit) in leaves {
            let node = partition.get(id)?;
            if !node.is_leaf() {
                return Err(Error::Format(format!("node {id} is internal but carries a leaf value")));
            }
            fits[id.0] = Some(fit);
        }
        if partition.leaves().iter().any(|l| fits[l.0].is_none()) {
            return Err(Error::Format("a leaf has no stored mean".into()));
        }
        Ok(ValidTree { partition, fits })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn leaf_fit(&self, id: NodeId) -> Option<LeafFit> {
        self.fits.get(id.0).copied().flatten()
    }

    /// `(leaf, fit)` pairs in breadth-first leaf order.
    pub fn leaf_fits(&self) -> Vec<(NodeId, LeafFit)> {
        self.partition
            .leaves()
            .into_iter()
            .map(|l| (l, self.fits[l.0].expect("every leaf is fitted")))
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let leaf = self.partition.leaf_of(x);
        self.fits[leaf.0].expect("every leaf is fitted").mean
    }
}

/// How the conditional mean was obtained for an [`OptimalTree`].
#[derive(Debug, Clone, PartialEq)]
pub enum OracleProvenance {
    ClosedForm,
    MonteCarlo { n_mc: usize, seed: u64 },
}

/// Feature distribution used by the Monte Carlo oracle.
pub trait FeatureSampler: Sync {
    fn sample(&self, rng: &mut SimRng, out: &mut [f64]);
}

/// Source of `E[Y | X in L]` for a leaf.
pub enum MeanOracle<'a> {
    ClosedForm(&'a (dyn Fn(&Rectangle) -> Option<f64> + Sync)),
    /// Averages `mean_fn` over `n_mc` draws of `X | X in L`. With no sampler,
    /// `X` is uniform on the cube and draws are taken directly inside the leaf;
    /// otherwise draws from `sampler` are rejected until they land in the leaf.
    MonteCarlo {
        mean_fn: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        sampler: Option<&'a dyn FeatureSampler>,
        n_mc: usize,
        seed: u64,
    },
}

/// Default Monte Carlo sample size per leaf.
pub const DEFAULT_N_MC: usize = 100_000;

const MAX_REJECTION_FACTOR: usize = 10_000;

/// Same partition as a fitted tree, with population leaf means.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalTree {
    partition: Partition,
    means: Vec<Option<f64>>,
    provenance: OracleProvenance,
}

impl OptimalTree {
    pub fn new(partition: Partition, oracle: &MeanOracle<'_>) -> Result<Self> {
        let leaves = partition.leaves();
        let mut means = vec![None; partition.len()];
        let provenance = match oracle {
            MeanOracle::ClosedForm(f) => {
                for &l in &leaves {
                    let v = f(&partition.node(l).region)
                        .ok_or_else(|| Error::OracleUnavailable(format!("no closed form for leaf {l}")))?;
                    means[l.0] = Some(v);
                }
                OracleProvenance::ClosedForm
            }
            MeanOracle::MonteCarlo {
                mean_fn,
                sampler,
                n_mc,
                seed,
            } => {
                if *n_mc == 0 {
                    return Err(Error::OracleUnavailable("n_mc must be at least 1".into()));
                }
                let values: Vec<Result<f64>> = leaves
                    .par_iter()
                    .map(|&l| {
                        let mut rng = rng_from_seed(derive_seed(*seed, l.0 as u64));
                        monte_carlo_mean(&partition.node(l).region, *mean_fn, *sampler, *n_mc, &mut rng)
                    })
                    .collect();
                for (&l, v) in leaves.iter().zip(values) {
                    means[l.0] = Some(v?);
                }
                OracleProvenance::MonteCarlo {
                    n_mc: *n_mc,
                    seed: *seed,
                }
            }
        };
        Ok(OptimalTree {
            partition,
            means,
            provenance,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn provenance(&self) -> &OracleProvenance {
        &self.provenance
    }

    pub fn leaf_mean(&self, id: NodeId) -> Option<f64> {
        self.means.get(id.0).copied().flatten()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let leaf = self.partition.leaf_of(x);
        self.means[leaf.0].expect("every leaf has an oracle mean")
    }
}

fn monte_carlo_mean(
    region: &Rectangle,
    mean_fn: &(dyn Fn(&[f64]) -> f64 + Sync),
    sampler: Option<&dyn FeatureSampler>,
    n_mc: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let d = region.dim();
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    match sampler {
        None => {
            for _ in 0..n_mc {
                for (j, v) in x.iter_mut().enumerate() {
                    *v = rng.random_range(region.lo()[j]..=region.hi()[j]);
                }
                total += mean_fn(&x);
            }
        }
        Some(s) => {
            let mut accepted = 0;
            let mut tries = 0usize;
            while accepted < n_mc {
                tries += 1;
                if tries > n_mc.saturating_mul(MAX_REJECTION_FACTOR) {
                    return Err(Error::OracleUnavailable(
                        "rejection sampling rarely lands in the leaf".into(),
                    ));
                }
                s.sample(rng, &mut x);
                if region.contains(&x) {
                    total += mean_fn(&x);
                    accepted += 1;
                }
            }
        }
    }
    Ok(total / n_mc as f64)
}

/// Provenance recorded alongside a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestMeta {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub alpha: f64,
    pub m: f64,
    pub seed: u64,
    pub max_attempts_per_node: usize,
}

/// Average of `B >= 1` valid trees sharing the same feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<ValidTree>,
    meta: ForestMeta,
}

impl Forest {
    pub fn new(trees: Vec<ValidTree>, meta: ForestMeta) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParams("a forest needs at least one tree".into()));
        }
        if let Some(t) = trees.iter().find(|t| t.partition().d() != meta.d) {
            return Err(Error::DimensionMismatch {
                expected: meta.d,
                got: t.partition().d(),
            });
        }
        Ok(Forest { trees, meta })
    }

    pub fn trees(&self) -> &[ValidTree] {
        &self.trees
    }

    pub fn meta(&self) -> &ForestMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.par_iter().map(|x| self.predict(x)).collect()
    }
}

/// Anything that maps a point to a real prediction.
pub trait Predictor {
    fn predict_at(&self, x: &[f64]) -> f64;
}

impl Predictor for ValidTree {
    fn predict_at(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

impl Predictor for OptimalTree {
    fn predict_at(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

impl Predictor for Forest {
    fn predict_at(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

/// `sup_x |T(x) - T*(x)|`, which for piecewise-constant trees on a shared
/// partition is the largest per-leaf gap.
pub fn sup_discrepancy(tree: &ValidTree, optimal: &OptimalTree) -> Result<f64> {
    if !tree.partition().same_structure(optimal.partition()) {
        return Err(Error::PartitionMismatch);
    }
    Ok(tree
        .partition()
        .leaves()
        .into_iter()
        .map(|l| {
            let fit = tree.leaf_fit(l).expect("fitted leaf").mean;
            let opt = optimal.leaf_mean(l).expect("oracle leaf");
            (fit - opt).abs()
        })
        .fold(0.0, f64::max))
}

/// `max_i |H(x_i) - H*(x_i)|` over the given points for a forest and its
/// partition-optimal counterpart (one optimal tree per fitted tree).
pub fn forest_discrepancy_at(forest: &Forest, optimal: &[OptimalTree], points: &[Vec<f64>]) -> Result<f64> {
    if optimal.len() != forest.len() {
        return Err(Error::PartitionMismatch);
    }
    for (t, o) in forest.trees().iter().zip(optimal) {
        if !t.partition().same_structure(o.partition()) {
            return Err(Error::PartitionMismatch);
        }
    }
    let b = forest.len() as f64;
    Ok(points
        .iter()
        .map(|x| {
            let h_star = optimal.iter().map(|o| o.predict(x)).sum::<f64>() / b;
            (forest.predict(x) - h_star).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(d: usize) -> ForestMeta {
        ForestMeta {
            n: 4,
            d,
            k: 1,
            alpha: 0.25,
            m: 1.0,
            seed: 0,
            max_attempts_per_node: 10,
        }
    }

    fn one_split_tree(ys: [f64; 4]) -> ValidTree {
        let data = Dataset::new(1, vec![0.1, 0.3, 0.6, 0.9], ys.to_vec(), None).unwrap();
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        p.split(Partition::root(), 0, 0.5).unwrap();
        ValidTree::fit(p, &data).unwrap()
    }

    #[test]
    fn fit_examples() {
        let data = Dataset::new(1, vec![0.1, 0.3, 0.6, 0.9], vec![1.0, -1.0, 1.0, -1.0], None).unwrap();
        let t = ValidTree::fit(Partition::new(1, 0.25, 1).unwrap(), &data).unwrap();
        assert_eq!(t.predict(&[0.2]), 0.0);

        let data = Dataset::new(1, vec![0.1, 0.5, 0.9], vec![0.2, 0.4, 0.9], None).unwrap();
        let t = ValidTree::fit(Partition::new(1, 0.25, 1).unwrap(), &data).unwrap();
        assert!((t.predict(&[0.7]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_invalid_partition() {
        let data = Dataset::new(1, vec![0.1, 0.2, 0.3, 0.4], vec![0.0; 4], None).unwrap();
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        p.split(Partition::root(), 0, 0.9).unwrap();
        assert!(matches!(ValidTree::fit(p, &data), Err(Error::InvalidPartition(_))));
    }

    #[test]
    fn optimal_closed_form_examples() {
        let mut p = Partition::new(2, 0.25, 1).unwrap();
        let (_, upper) = p.split(Partition::root(), 0, 0.5).unwrap();
        let zero = |_: &Rectangle| Some(0.0);
        let o = OptimalTree::new(p.clone(), &MeanOracle::ClosedForm(&zero)).unwrap();
        assert!(p.leaves().iter().all(|&l| o.leaf_mean(l) == Some(0.0)));

        let step = |r: &Rectangle| Some(if r.lo()[0] >= 0.5 { 1.0 } else { 0.0 });
        let o = OptimalTree::new(p.clone(), &MeanOracle::ClosedForm(&step)).unwrap();
        assert_eq!(o.leaf_mean(upper), Some(1.0));

        let none = |_: &Rectangle| None;
        assert!(matches!(
            OptimalTree::new(p, &MeanOracle::ClosedForm(&none)),
            Err(Error::OracleUnavailable(_))
        ));
    }

    #[test]
    fn optimal_monte_carlo_matches_closed_form_ramp() {
        // E[x | x in [0.2, 0.6]] = 0.4 under uniform features
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (lower, _) = p.split(Partition::root(), 0, 0.6).unwrap();
        let (_, leaf) = p.split(lower, 0, 0.2).unwrap();
        let f = |x: &[f64]| x[0];
        let o = OptimalTree::new(
            p,
            &MeanOracle::MonteCarlo {
                mean_fn: &f,
                sampler: None,
                n_mc: DEFAULT_N_MC,
                seed: 3,
            },
        )
        .unwrap();
        let v = o.leaf_mean(leaf).unwrap();
        // standard error is 0.4 / sqrt(12 * 1e5) ~ 3.7e-4
        assert!((v - 0.4).abs() < 2e-3, "{v}");
        assert_eq!(o.provenance(), &OracleProvenance::MonteCarlo { n_mc: DEFAULT_N_MC, seed: 3 });
    }

    struct UniformCube;
    impl FeatureSampler for UniformCube {
        fn sample(&self, rng: &mut SimRng, out: &mut [f64]) {
            for v in out.iter_mut() {
                *v = rng.random::<f64>();
            }
        }
    }

    #[test]
    fn optimal_monte_carlo_with_rejection_sampler() {
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (_, upper) = p.split(Partition::root(), 0, 0.5).unwrap();
        let f = |x: &[f64]| x[0];
        let o = OptimalTree::new(
            p,
            &MeanOracle::MonteCarlo {
                mean_fn: &f,
                sampler: Some(&UniformCube),
                n_mc: 20_000,
                seed: 1,
            },
        )
        .unwrap();
        assert!((o.leaf_mean(upper).unwrap() - 0.75).abs() < 5e-3);
    }

    #[test]
    fn forest_predictions() {
        let t = one_split_tree([0.1, 0.1, 0.3, 0.3]);
        let f = Forest::new(vec![t.clone(), t.clone(), t.clone()], meta(1)).unwrap();
        assert!((f.predict(&[0.2]) - t.predict(&[0.2])).abs() < 1e-15);

        let a = one_split_tree([1.0, 1.0, 0.0, 0.0]);
        let b = one_split_tree([-1.0, -1.0, 0.0, 0.0]);
        let f = Forest::new(vec![a, b], meta(1)).unwrap();
        assert_eq!(f.predict(&[0.2]), 0.0);

        let trees: Vec<ValidTree> = [0.1, 0.2, 0.6]
            .iter()
            .map(|&v| one_split_tree([v, v, 0.0, 0.0]))
            .collect();
        let f = Forest::new(trees, meta(1)).unwrap();
        assert!((f.predict(&[0.2]) - 0.3).abs() < 1e-15);
        assert!(Forest::new(vec![], meta(1)).is_err());
    }

    #[test]
    fn sup_discrepancy_examples() {
        let t = one_split_tree([0.1, 0.1, 0.5, 0.5]);
        let p = t.partition().clone();
        let leaves = p.leaves();
        let same = |r: &Rectangle| Some(if r.hi()[0] <= 0.5 { 0.1 } else { 0.5 });
        let o = OptimalTree::new(p.clone(), &MeanOracle::ClosedForm(&same)).unwrap();
        assert_eq!(sup_discrepancy(&t, &o).unwrap(), 0.0);

        let shifted = |r: &Rectangle| Some(if r.hi()[0] <= 0.5 { 0.1 } else { 0.2 });
        let o = OptimalTree::new(p.clone(), &MeanOracle::ClosedForm(&shifted)).unwrap();
        assert!((sup_discrepancy(&t, &o).unwrap() - 0.3).abs() < 1e-15);

        let both = |r: &Rectangle| Some(if r.hi()[0] <= 0.5 { 0.0 } else { 0.2 });
        let o = OptimalTree::new(p, &MeanOracle::ClosedForm(&both)).unwrap();
        assert!((sup_discrepancy(&t, &o).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(leaves.len(), 2);

        let other = OptimalTree::new(Partition::new(1, 0.25, 1).unwrap(), &MeanOracle::ClosedForm(&same)).unwrap();
        assert_eq!(sup_discrepancy(&t, &other), Err(Error::PartitionMismatch));
    }
}
