//! Recursive axis-aligned partitions and the `{alpha, k}` validity check.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{min_child_count, Dataset, Rectangle};

/// Index of a node inside a [`Partition`]; the root is `NodeId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub axis: usize,
    pub threshold: f64,
    pub lower: NodeId,
    pub upper: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitNode {
    pub region: Rectangle,
    pub split: Option<Split>,
    pub depth: usize,
}

impl SplitNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// A recursive partition of `[0,1]^d` with the validity parameters it is
/// meant to satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    nodes: Vec<SplitNode>,
    alpha: f64,
    k: usize,
}

/// Which validity rule a node breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// A child received fewer than the required share of its parent's points.
    ChildFraction { child: NodeId, count: usize, required: usize },
    /// A leaf holds fewer than `k` points.
    LeafSize { count: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: NodeId,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::ChildFraction { child, count, required } => write!(
                f,
                "node {}: child fraction, child {} has {} points, needs {}",
                self.node, child, count, required
            ),
            Rule::LeafSize { count, required } => write!(
                f,
                "node {}: leaf size, {} points, needs {}",
                self.node, count, required
            ),
        }
    }
}

/// Outcome of [`Partition::validate`]; a value so callers can count failures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidityVerdict {
    pub violations: Vec<Violation>,
}

impl ValidityVerdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Partition {
    /// Single-leaf partition of `[0,1]^d`. `alpha` may be `0.5` to denote the
    /// median-split variant.
    pub fn new(d: usize, alpha: f64, k: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParams("d must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 0.5], got {alpha}")));
        }
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        Ok(Partition {
            nodes: vec![SplitNode {
                region: Rectangle::unit(d),
                split: None,
                depth: 0,
            }],
            alpha,
            k,
        })
    }

    pub fn root() -> NodeId {
        NodeId(0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.nodes[0].region.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SplitNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[SplitNode] {
        &self.nodes
    }

    pub fn get(&self, id: NodeId) -> Result<&SplitNode> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    /// Splits leaf `id` at `tau` on `axis`, returning the lower and upper child.
    pub fn split(&mut self, id: NodeId, axis: usize, tau: f64) -> Result<(NodeId, NodeId)> {
        let node = self.get(id)?;
        if !node.is_leaf() {
            return Err(Error::AlreadySplit(id.0));
        }
        let (lower_region, upper_region) = node.region.split(axis, tau)?;
        let depth = node.depth + 1;
        let lower = NodeId(self.nodes.len());
        let upper = NodeId(self.nodes.len() + 1);
        self.nodes.push(SplitNode {
            region: lower_region,
            split: None,
            depth,
        });
        self.nodes.push(SplitNode {
            region: upper_region,
            split: None,
            depth,
        });
        self.nodes[id.0].split = Some(Split {
            axis,
            threshold: tau,
            lower,
            upper,
        });
        Ok((lower, upper))
    }

    /// Leaves in breadth-first order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([Self::root()]);
        while let Some(id) = queue.pop_front() {
            match self.nodes[id.0].split {
                None => out.push(id),
                Some(s) => {
                    queue.push_back(s.lower);
                    queue.push_back(s.upper);
                }
            }
        }
        out
    }

    /// The unique leaf containing `x`.
    pub fn leaf_of(&self, x: &[f64]) -> NodeId {
        let mut id = Self::root();
        while let Some(s) = self.nodes[id.0].split {
            id = if x[s.axis] <= s.threshold { s.lower } else { s.upper };
        }
        id
    }

    /// Leaf of every row of `data`.
    pub fn assign(&self, data: &Dataset) -> Vec<NodeId> {
        (0..data.n()).map(|i| self.leaf_of(data.row(i))).collect()
    }

    /// Number of rows of `data` routed through each node.
    pub fn node_counts(&self, data: &Dataset) -> Vec<usize> {
        let mut counts = vec![0usize; self.nodes.len()];
        for i in 0..data.n() {
            let x = data.row(i);
            let mut id = Self::root();
            counts[id.0] += 1;
            while let Some(s) = self.nodes[id.0].split {
                id = if x[s.axis] <= s.threshold { s.lower } else { s.upper };
                counts[id.0] += 1;
            }
        }
        counts
    }

    /// Checks `{alpha, k}`-validity against `data`.
    pub fn validate(&self, data: &Dataset) -> ValidityVerdict {
        let counts = self.node_counts(data);
        let mut violations = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let id = NodeId(i);
            match node.split {
                Some(s) => {
                    let required = min_child_count(self.alpha, counts[i]);
                    for child in [s.lower, s.upper] {
                        if counts[child.0] < required {
                            violations.push(Violation {
                                node: id,
                                rule: Rule::ChildFraction {
                                    child,
                                    count: counts[child.0],
                                    required,
                                },
                            });
                        }
                    }
                }
                None => {
                    if counts[i] < self.k {
                        violations.push(Violation {
                            node: id,
                            rule: Rule::LeafSize {
                                count: counts[i],
                                required: self.k,
                            },
                        });
                    }
                }
            }
        }
        ValidityVerdict { violations }
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// True when both partitions have the same split structure.
    pub fn same_structure(&self, other: &Partition) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| match (a.split, b.split) {
                (None, None) => true,
                (Some(x), Some(y)) => {
                    x.axis == y.axis && x.threshold == y.threshold && x.lower == y.lower && x.upper == y.upper
                }
                _ => false,
            })
    }
}

/// Largest support size a leaf of a valid partition can have:
/// `floor(ln(n/k) / ln(1/(1-alpha))) + 1`.
pub fn max_support_size(n: usize, k: usize, alpha: f64) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParams(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    let ratio = (n as f64 / k as f64).ln() / (1.0 / (1.0 - alpha)).ln();
    Ok(ratio.floor() as usize + 1)
}

/// Depth bound `ln(n/k) / ln(1/(1-alpha))` satisfied by every leaf of a valid
/// partition with `alpha < 0.5`.
pub fn depth_bound(n: usize, k: usize, alpha: f64) -> f64 {
    (n as f64 / k as f64).ln() / (1.0 / (1.0 - alpha)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data(xs: &[f64]) -> Dataset {
        Dataset::new(1, xs.to_vec(), vec![0.0; xs.len()], None).unwrap()
    }

    #[test]
    fn split_root_of_unit_interval() {
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (lo, hi) = p.split(Partition::root(), 0, 0.5).unwrap();
        assert_eq!(p.node(lo).region.hi(), &[0.5]);
        assert_eq!(p.node(hi).region.lo(), &[0.5]);
        assert_eq!(p.leaves(), vec![lo, hi]);
    }

    #[test]
    fn split_errors() {
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        assert!(matches!(p.split(Partition::root(), 0, 1.0), Err(Error::SplitOutsideRegion { .. })));
        assert!(matches!(p.split(Partition::root(), 0, 0.0), Err(Error::SplitOutsideRegion { .. })));
        p.split(Partition::root(), 0, 0.5).unwrap();
        assert!(matches!(p.split(Partition::root(), 0, 0.3), Err(Error::AlreadySplit(0))));
    }

    #[test]
    fn nested_splits_widths() {
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (lo, _) = p.split(Partition::root(), 0, 0.5).unwrap();
        p.split(lo, 0, 0.25).unwrap();
        let mut widths: Vec<f64> = p.leaves().iter().map(|&l| p.node(l).region.width(0)).collect();
        widths.sort_by(f64::total_cmp);
        assert_eq!(widths, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn validate_examples() {
        let data = line_data(&(0..100).map(|i| (i as f64 + 0.5) / 100.0).collect::<Vec<_>>());
        let p = Partition::new(1, 0.25, 10).unwrap();
        assert!(p.validate(&data).is_ok());

        // every point below the threshold
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (_, upper) = p.split(Partition::root(), 0, 0.999).unwrap();
        let v = p.validate(&data);
        assert_eq!(v.violations.len(), 2);
        assert!(v.violations.iter().any(|x| matches!(
            x.rule,
            Rule::ChildFraction { child, count: 0, required: 25 } if child == upper
        )));

        let mut p = Partition::new(1, 0.25, 60).unwrap();
        p.split(Partition::root(), 0, 0.5).unwrap();
        let v = p.validate(&data);
        assert_eq!(v.violations.len(), 2);
        assert!(v
            .violations
            .iter()
            .all(|x| matches!(x.rule, Rule::LeafSize { count: 50, required: 60 })));
    }

    #[test]
    fn child_fraction_uses_ceiling() {
        // parent of 13 points with alpha = 0.25 needs ceil(3.25) = 4 per child
        let xs: Vec<f64> = (0..13).map(|i| (i as f64 + 0.5) / 13.0).collect();
        let data = line_data(&xs);
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        p.split(Partition::root(), 0, xs[2]).unwrap();
        assert!(!p.validate(&data).is_ok());
        let mut p = Partition::new(1, 0.25, 1).unwrap();
        p.split(Partition::root(), 0, xs[3]).unwrap();
        assert!(p.validate(&data).is_ok());
    }

    #[test]
    fn leaf_of_examples() {
        let p = Partition::new(2, 0.25, 1).unwrap();
        assert_eq!(p.leaf_of(&[0.3, 0.9]), Partition::root());

        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (lo, _) = p.split(Partition::root(), 0, 0.5).unwrap();
        assert_eq!(p.leaf_of(&[0.5]), lo);

        let mut p = Partition::new(1, 0.25, 1).unwrap();
        let (lo, _) = p.split(Partition::root(), 0, 0.5).unwrap();
        let (_, mid) = p.split(lo, 0, 0.25).unwrap();
        assert_eq!(p.leaf_of(&[0.3]), mid);
        assert!(p.node(mid).region.contains(&[0.3]));
    }

    #[test]
    fn max_support_size_examples() {
        assert_eq!(max_support_size(64, 64, 0.3).unwrap(), 1);
        assert!(max_support_size(1024, 64, 0.5).is_err());
        assert_eq!(max_support_size(1024, 64, 0.3).unwrap(), 8);
        assert!(max_support_size(10, 11, 0.3).is_err());
        assert!(max_support_size(10, 0, 0.3).is_err());
    }
}
