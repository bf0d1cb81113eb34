//! Partition tree over partial realizations of the component states.
//!
//! Each node fixes the states of a subset of components; its children fix
//! one more component to every state `0..=K`. The leaves partition the
//! support, and each leaf is evaluated at the conditional mean of the
//! unfixed components.

use std::fmt::Write;

use crate::instance::{AllocationVector, Instance};
use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    /// Component fixed on entry to this node and its state.
    pub fixed_here: Option<(usize, usize)>,
    /// All fixings along the path from the root, sorted by component.
    pub fixed: Vec<(usize, usize)>,
    pub children: Vec<NodeId>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn fixes(&self, component: usize) -> bool {
        self.fixed.binary_search_by_key(&component, |&(i, _)| i).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTree {
    k: usize,
    nodes: Vec<TreeNode>,
}

impl PartitionTree {
    /// The tree made of the root alone; `k` is the largest state.
    pub fn new(k: usize) -> Self {
        PartitionTree {
            k,
            nodes: vec![TreeNode {
                id: 0,
                parent: None,
                fixed_here: None,
                fixed: Vec::new(),
                children: Vec::new(),
            }],
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn num_arcs(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Leaves in increasing id order.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id)
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Splits `leaf` on `component`, returning the `K + 1` children in
    /// state order.
    pub fn refine(&mut self, leaf: NodeId, component: usize) -> Result<Vec<NodeId>> {
        let node = self
            .nodes
            .get(leaf)
            .ok_or_else(|| Error::input(format!("no node {leaf}")))?;
        if !node.is_leaf() {
            return Err(Error::input(format!("node {leaf} is not a leaf")));
        }
        if node.fixes(component) {
            return Err(Error::input(format!("component {component} already fixed at node {leaf}")));
        }
        let base = node.fixed.clone();
        let first = self.nodes.len();
        for kappa in 0..=self.k {
            let mut fixed = base.clone();
            let pos = fixed.partition_point(|&(i, _)| i < component);
            fixed.insert(pos, (component, kappa));
            self.nodes.push(TreeNode {
                id: first + kappa,
                parent: Some(leaf),
                fixed_here: Some((component, kappa)),
                fixed,
                children: Vec::new(),
            });
        }
        let children: Vec<NodeId> = (first..self.nodes.len()).collect();
        self.nodes[leaf].children = children.clone();
        Ok(children)
    }

    /// `prod_{(i, kappa) in F(node)} P(xi_i = kappa | x)`.
    pub fn node_probability(&self, inst: &Instance, node: NodeId, x: &AllocationVector) -> f64 {
        fixed_probability(inst, &self.nodes[node].fixed, x)
    }

    pub fn leaf_conditional_mean(&self, inst: &Instance, leaf: NodeId, x: &AllocationVector) -> Result<Vec<f64>> {
        inst.expected_state(x, &self.nodes[leaf].fixed)
    }

    /// Leaf with the largest gap; ties go to the lowest id.
    pub fn select_leaf(&self, mut gap: impl FnMut(NodeId) -> Result<f64>) -> Result<(NodeId, f64)> {
        let mut best: Option<(NodeId, f64)> = None;
        for leaf in self.leaves() {
            let d = gap(leaf)?;
            if best.map_or(true, |(_, b)| d > b) {
                best = Some((leaf, d));
            }
        }
        Ok(best.expect("a tree always has a leaf"))
    }

    /// Unfixed varying component minimizing the expected child gap
    /// `sum_kappa P(xi_i = kappa | x) * gap(child fixings)`; ties go to the
    /// lowest index.
    pub fn select_component(
        &self,
        inst: &Instance,
        leaf: NodeId,
        x: &AllocationVector,
        mut child_gap: impl FnMut(&[(usize, usize)]) -> Result<f64>,
    ) -> Result<usize> {
        let node = &self.nodes[leaf];
        let mut best: Option<(usize, f64)> = None;
        for &i in inst.varying() {
            if node.fixes(i) {
                continue;
            }
            let dist = inst.table().distribution(i, x.level(i));
            let mut score = 0.0;
            for (kappa, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let mut fixed = node.fixed.clone();
                let pos = fixed.partition_point(|&(j, _)| j < i);
                fixed.insert(pos, (i, kappa));
                score += p * child_gap(&fixed)?;
            }
            if best.map_or(true, |(_, b)| score < b) {
                best = Some((i, score));
            }
        }
        best.map(|(i, _)| i)
            .ok_or_else(|| Error::input(format!("leaf {leaf} has no unfixed varying component")))
    }

    /// One line per node, indented by depth: id, fixings, leaf flag.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let node = &self.nodes[id];
            let fixed: Vec<String> = node.fixed.iter().map(|(i, k)| format!("{i}={k}")).collect();
            let _ = writeln!(
                out,
                "{:indent$}{} [{}]{}",
                "",
                id,
                fixed.join(","),
                if node.is_leaf() { " leaf" } else { "" },
                indent = 2 * depth
            );
            for &c in node.children.iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        out
    }
}

/// Probability of a set of fixings under `x`.
pub fn fixed_probability(inst: &Instance, fixed: &[(usize, usize)], x: &AllocationVector) -> f64 {
    fixed
        .iter()
        .map(|&(i, kappa)| inst.table().prob(i, kappa, x.level(i)))
        .product()
}
