//! Second-stage evaluators and the bounds they induce on a partition tree
//! at a fixed allocation.

use crate::instance::{AllocationVector, Instance};
use crate::partition_tree::{fixed_probability, NodeId, PartitionTree};
use crate::Result;

/// Convex evaluator; a lower bound on the conditional expectation when
/// applied at a conditional mean.
pub fn recourse_value(inst: &Instance, state: &[f64]) -> Result<f64> {
    inst.recourse().lower_value(state)
}

/// Concave evaluator; an upper bound when applied at a conditional mean.
pub fn penalized_value(inst: &Instance, state: &[f64]) -> Result<f64> {
    inst.recourse().upper_value(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafBound {
    pub leaf: NodeId,
    pub probability: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub leaves: Vec<LeafBound>,
}

impl BoundPair {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Evaluates both bounds on every leaf with positive probability.
pub fn tree_bounds(inst: &Instance, tree: &PartitionTree, x: &AllocationVector) -> Result<BoundPair> {
    let mut out = BoundPair {
        lower: 0.0,
        upper: 0.0,
        leaves: Vec::new(),
    };
    for leaf in tree.leaves() {
        let p = tree.node_probability(inst, leaf, x);
        if p == 0.0 {
            continue;
        }
        let mean = tree.leaf_conditional_mean(inst, leaf, x)?;
        let lo = recourse_value(inst, &mean)?;
        let hi = penalized_value(inst, &mean)?;
        out.lower += p * lo;
        out.upper += p * hi;
        out.leaves.push(LeafBound {
            leaf,
            probability: p,
            lower: lo,
            upper: hi,
        });
    }
    Ok(out)
}

/// `P[F | x] * (upper - lower)` at the conditional mean given fixings `F`.
pub fn fixed_gap(inst: &Instance, fixed: &[(usize, usize)], x: &AllocationVector) -> Result<f64> {
    let p = fixed_probability(inst, fixed, x);
    if p == 0.0 {
        return Ok(0.0);
    }
    let mean = inst.expected_state(x, fixed)?;
    if mean.iter().all(|m| m.fract() == 0.0) {
        // the evaluators agree on integral states
        return Ok(0.0);
    }
    let d = penalized_value(inst, &mean)? - recourse_value(inst, &mean)?;
    Ok(p * d.max(0.0))
}

pub fn leaf_gap(inst: &Instance, tree: &PartitionTree, leaf: NodeId, x: &AllocationVector) -> Result<f64> {
    fixed_gap(inst, &tree.node(leaf).fixed, x)
}
