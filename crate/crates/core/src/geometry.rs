//! Distance-generating functions, Bregman divergences and proximal mappings.
//!
//! A geometry couples a strongly convex distance-generating function with a
//! feasible set. Two closed-form pairs ship:
//!
//! - quadratic `w(u) = ||u||^2 / 2` over all of space or a coordinate box,
//!   whose divergence is `||b - a||^2 / 2` and whose proximal step is a plain
//!   (possibly clipped) gradient step;
//! - negative entropy `w(u) = sum u_j ln u_j` over the probability simplex,
//!   whose divergence is the KL divergence `KL(b || a)` and whose proximal
//!   step is the multiplicative-weights update.
//!
//! Both satisfy separate convexity of the divergence in its first argument,
//! which the consensus analysis relies on; that property is exercised by a
//! randomized test rather than proved by construction.

use crate::block::BlockPartition;
use crate::error::{Error, Result};
use std::sync::Arc;

/// Tolerance used when checking membership of feasible sets.
const FEASIBILITY_TOL: f64 = 1e-9;

/// Positivity floor applied to entropy prox outputs so the gradient of the
/// entropy stays defined at the next call.
const ENTROPY_FLOOR: f64 = 1e-300;

/// Feasible set of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    AllSpace,
    /// Coordinate-wise bounds, `lower[k] <= u[k] <= upper[k]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{ u : u >= 0, sum u = 1 }`.
    Simplex,
}

/// Distance-generating function kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Quadratic,
    NegativeEntropy,
}

/// A Bregman geometry: kind, feasible set and strong convexity modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct BregmanGeometry {
    kind: GeometryKind,
    set: FeasibleSet,
    strong_convexity: f64,
}

impl BregmanGeometry {
    /// Quadratic geometry over all of space (strong convexity exactly 1).
    pub fn quadratic() -> Self {
        Self {
            kind: GeometryKind::Quadratic,
            set: FeasibleSet::AllSpace,
            strong_convexity: 1.0,
        }
    }

    /// Quadratic geometry over a coordinate box.
    pub fn quadratic_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Infeasible {
                geometry: "quadratic box".into(),
                reason: "lower and upper bounds differ in length".into(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Infeasible {
                geometry: "quadratic box".into(),
                reason: "lower bound exceeds upper bound".into(),
            });
        }
        Ok(Self {
            kind: GeometryKind::Quadratic,
            set: FeasibleSet::Box { lower, upper },
            strong_convexity: 1.0,
        })
    }

    /// Negative entropy over the probability simplex.
    ///
    /// On the simplex the entropy Hessian `diag(1/u_j)` dominates the
    /// identity, so the recorded strong convexity modulus is 1.
    pub fn entropy_simplex() -> Self {
        Self {
            kind: GeometryKind::NegativeEntropy,
            set: FeasibleSet::Simplex,
            strong_convexity: 1.0,
        }
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    fn check_feasible(&self, u: &[f64], role: &str) -> Result<()> {
        match &self.set {
            FeasibleSet::AllSpace => Ok(()),
            FeasibleSet::Box { lower, upper } => {
                for (k, &x) in u.iter().enumerate() {
                    if x < lower[k] - FEASIBILITY_TOL || x > upper[k] + FEASIBILITY_TOL {
                        return Err(Error::Infeasible {
                            geometry: "quadratic box".into(),
                            reason: format!("{role}[{k}] = {x} outside [{}, {}]", lower[k], upper[k]),
                        });
                    }
                }
                Ok(())
            }
            FeasibleSet::Simplex => {
                if u.iter().any(|&x| x < -FEASIBILITY_TOL) {
                    return Err(Error::Infeasible {
                        geometry: "simplex".into(),
                        reason: format!("{role} has a negative coordinate"),
                    });
                }
                let s: f64 = u.iter().sum();
                if (s - 1.0).abs() > FEASIBILITY_TOL {
                    return Err(Error::Infeasible {
                        geometry: "simplex".into(),
                        reason: format!("{role} sums to {s}"),
                    });
                }
                Ok(())
            }
        }
    }

    /// Bregman divergence `nu(a, b) = w(b) - w(a) - <grad w(a), b - a>`.
    ///
    /// Quadratic: `||b - a||^2 / 2`. Entropy on the simplex: `KL(b || a)`,
    /// which requires every coordinate of `a` to be strictly positive.
    pub fn divergence(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        assert_eq!(a.len(), b.len(), "divergence arguments differ in length");
        self.check_feasible(a, "a")?;
        self.check_feasible(b, "b")?;
        match self.kind {
            GeometryKind::Quadratic => {
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let d = y - x;
                    acc += d * d;
                }
                Ok(0.5 * acc)
            }
            GeometryKind::NegativeEntropy => {
                let mut acc = 0.0;
                for (k, (&x, &y)) in a.iter().zip(b).enumerate() {
                    if x <= 0.0 {
                        return Err(Error::Infeasible {
                            geometry: "entropy".into(),
                            reason: format!(
                                "a[{k}] = {x}: entropy gradient undefined at zero"
                            ),
                        });
                    }
                    if y > 0.0 {
                        acc += y * (y / x).ln();
                    }
                    // b_j ln b_j -> 0 as b_j -> 0, so zero coordinates of b
                    // contribute nothing.
                    acc += x - y;
                }
                Ok(acc)
            }
        }
    }

    /// Proximal mapping `argmin_u { <g, u> + nu(a, u) / c }` over the
    /// feasible set.
    ///
    /// Closed forms: quadratic/all-space `a - c g`; quadratic/box the same
    /// step clipped coordinate-wise; entropy/simplex the multiplicative
    /// update `u_j = a_j exp(-c g_j) / Z` (computed with a max-shift so large
    /// exponents cannot overflow).
    pub fn prox(&self, a: &[f64], g: &[f64], c: f64) -> Result<Vec<f64>> {
        assert_eq!(a.len(), g.len(), "prox arguments differ in length");
        if !(c > 0.0) {
            return Err(Error::NonpositiveStepsize(c));
        }
        if let Some(k) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSubgradient(k));
        }
        self.check_feasible(a, "a")?;
        match (&self.kind, &self.set) {
            (GeometryKind::Quadratic, FeasibleSet::AllSpace) => {
                Ok(a.iter().zip(g).map(|(x, gk)| x - c * gk).collect())
            }
            (GeometryKind::Quadratic, FeasibleSet::Box { lower, upper }) => Ok(a
                .iter()
                .zip(g)
                .enumerate()
                .map(|(k, (x, gk))| (x - c * gk).clamp(lower[k], upper[k]))
                .collect()),
            (GeometryKind::NegativeEntropy, FeasibleSet::Simplex) => {
                if let Some(k) = a.iter().position(|&x| x <= 0.0) {
                    return Err(Error::Infeasible {
                        geometry: "entropy".into(),
                        reason: format!("a[{k}] must be strictly positive"),
                    });
                }
                let shift = g
                    .iter()
                    .map(|&gk| -c * gk)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut u: Vec<f64> = a
                    .iter()
                    .zip(g)
                    .map(|(&x, &gk)| x * (-c * gk - shift).exp())
                    .collect();
                let z: f64 = u.iter().sum();
                for x in &mut u {
                    *x = (*x / z).max(ENTROPY_FLOOR);
                }
                Ok(u)
            }
            (kind, set) => Err(Error::Infeasible {
                geometry: format!("{kind:?}"),
                reason: format!("unsupported pairing with {set:?}"),
            }),
        }
    }

    /// Gradient of the distance-generating function, used by optimality
    /// residual checks.
    pub fn dgf_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            GeometryKind::Quadratic => Ok(u.to_vec()),
            GeometryKind::NegativeEntropy => {
                if let Some(k) = u.iter().position(|&x| x <= 0.0) {
                    return Err(Error::Infeasible {
                        geometry: "entropy".into(),
                        reason: format!("gradient undefined at u[{k}] <= 0"),
                    });
                }
                Ok(u.iter().map(|&x| x.ln() + 1.0).collect())
            }
        }
    }

    /// A feasible starting block: box midpoints (finite sides) or zero for
    /// quadratic geometries, the uniform distribution for the simplex.
    pub fn default_point(&self, len: usize) -> Vec<f64> {
        match &self.set {
            FeasibleSet::AllSpace => vec![0.0; len],
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| {
                    let mid = 0.5 * (l + u);
                    if mid.is_finite() {
                        mid
                    } else {
                        l.max(0.0).min(u)
                    }
                })
                .collect(),
            FeasibleSet::Simplex => vec![1.0 / len as f64; len],
        }
    }
}

/// Per-block geometry assignment for the whole decision vector.
#[derive(Debug, Clone)]
pub struct BlockGeometry {
    partition: Arc<BlockPartition>,
    blocks: Vec<BregmanGeometry>,
}

impl BlockGeometry {
    /// The same geometry on every block.
    pub fn uniform(partition: Arc<BlockPartition>, geometry: BregmanGeometry) -> Self {
        let blocks = vec![geometry; partition.num_blocks()];
        Self { partition, blocks }
    }

    pub fn new(partition: Arc<BlockPartition>, blocks: Vec<BregmanGeometry>) -> Result<Self> {
        if blocks.len() != partition.num_blocks() {
            return Err(Error::InvalidConfig(format!(
                "{} geometries for {} blocks",
                blocks.len(),
                partition.num_blocks()
            )));
        }
        Ok(Self { partition, blocks })
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn block(&self, l: usize) -> &BregmanGeometry {
        &self.blocks[l]
    }

    /// `sigma = min_l sigma_l`, the modulus the step bounds use.
    pub fn min_strong_convexity(&self) -> f64 {
        self.blocks
            .iter()
            .map(BregmanGeometry::strong_convexity)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_quadratic_all_space(&self) -> bool {
        self.blocks.iter().all(|g| {
            g.kind() == GeometryKind::Quadratic && *g.feasible_set() == FeasibleSet::AllSpace
        })
    }
}
