//! Successive refinement: an epigraph model of the partition-tree lower
//! bound, refined lazily from inside the branch-and-bound candidate
//! callback until every leaf's bound gap at the incumbent is below `eps`.
//!
//! Model layout:
//!
//! ```text
//! min  c x + theta_root
//!      sum_l x_il = 1,  sum_il l x_il <= budget * L,  x binary
//!      theta_leaf >= value of the convex second-stage LP at the leaf's
//!                    conditional mean (a copy of the LP per leaf)
//!      theta_node >= sum_k sum_l p_i(k, l) x_il theta_child(k)
//!                    (refined nodes; products linearized)
//! ```

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::bnb::{self, BnbOptions, BnbStatus, TracePoint, Verdict};
use crate::bounds::{fixed_gap, tree_bounds};
use crate::instance::{AllocationVector, Instance};
use crate::linearize::{mccormick_product, ProductAux};
use crate::lp::{LinearProgram, Row};
use crate::partition_tree::{NodeId, PartitionTree};
use crate::{Error, Result};

/// Epigraph model over a partition tree.
#[derive(Clone, Debug)]
pub struct EpigraphModel {
    pub lp: LinearProgram,
    /// `x[i][level]` variable indices.
    pub x: Vec<Vec<usize>>,
    /// Epigraph variable of each tree node (indexed by node id).
    pub theta: Vec<usize>,
    pub products: Vec<ProductAux>,
    pub theta_bounds: (f64, f64),
}

impl EpigraphModel {
    pub fn binaries(&self) -> Vec<usize> {
        self.x.iter().flatten().copied().collect()
    }

    /// Allocation encoded by an (integral) LP point.
    pub fn allocation(&self, primal: &[f64]) -> AllocationVector {
        AllocationVector::new(
            self.x
                .iter()
                .map(|row| {
                    (0..row.len())
                        .max_by(|&a, &b| primal[row[a]].total_cmp(&primal[row[b]]).then(b.cmp(&a)))
                        .unwrap_or(0)
                })
                .collect(),
        )
    }

    /// Pins `x` to the given allocation through bound overrides.
    pub fn fixings(&self, x: &AllocationVector) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.x.iter().enumerate() {
            for (level, &j) in row.iter().enumerate() {
                let v = x.indicator(i, level);
                out.push((j, v, v));
            }
        }
        out
    }
}

/// Initial model over the root-only tree.
pub fn build_initial(inst: &Instance) -> Result<EpigraphModel> {
    let mut lp = LinearProgram::new();
    let l = inst.l();
    let x: Vec<Vec<usize>> = (0..inst.n())
        .map(|i| {
            (0..=l)
                .map(|level| lp.add_named_var(format!("x_{i}_{level}"), inst.alloc_cost(i, level), 0.0, 1.0))
                .collect()
        })
        .collect();
    for row in &x {
        lp.add_row(Row::eq(row.iter().map(|&j| (j, 1.0)).collect(), 1.0))?;
    }
    let budget: Vec<(usize, f64)> = x
        .iter()
        .flat_map(|row| row.iter().enumerate().skip(1).map(|(level, &j)| (j, level as f64)))
        .collect();
    lp.add_row(Row::le(budget, inst.budget_rhs() as f64))?;
    let (lo, hi) = inst.theta_bounds();
    let root = lp.add_named_var("theta_0", 1.0, lo, hi);
    let mut model = EpigraphModel {
        lp,
        x,
        theta: vec![root],
        products: Vec::new(),
        theta_bounds: (lo, hi),
    };
    add_leaf_block(&mut model, inst, root, &[])?;
    Ok(model)
}

/// Rows forcing `theta >= min { q y : y feasible at the conditional mean }`.
/// The mean of an unfixed component is `sum_l m_il x_il`, so the block is
/// linear in `x`.
fn add_leaf_block(model: &mut EpigraphModel, inst: &Instance, theta: usize, fixed: &[(usize, usize)]) -> Result<()> {
    let template = inst.recourse().lower();
    let lp = &mut model.lp;
    let y: Vec<usize> = (0..template.num_vars())
        .map(|j| lp.add_var(0.0, template.lower[j], template.upper[j]))
        .collect();
    let mut fixed_state = vec![None; inst.n()];
    for &(i, k) in fixed {
        fixed_state[i] = Some(k as f64);
    }
    let mut rows = Vec::with_capacity(template.rows.len() + 1);
    for row in &template.rows {
        let mut coeffs: Vec<(usize, f64)> = row.coeffs.iter().map(|&(j, a)| (y[j], a)).collect();
        let mut rhs = row.rhs;
        for &(i, g) in &row.state_coeffs {
            match fixed_state[i] {
                Some(k) => rhs += g * k,
                None => {
                    for (level, &xj) in model.x[i].iter().enumerate() {
                        let m = inst.table().mean(i, level);
                        if m != 0.0 {
                            coeffs.push((xj, -g * m));
                        }
                    }
                }
            }
        }
        rows.push(Row::new(coeffs, row.relation, rhs));
    }
    let mut epi = vec![(theta, 1.0)];
    epi.extend(
        template
            .cost
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| (y[j], -c)),
    );
    rows.push(Row::ge(epi, 0.0));
    lp.add_rows(rows)?;
    Ok(())
}

/// Adds the epigraph variables and leaf blocks of the children of `node`
/// (already refined in `tree`) and the row linking them to `node`.
pub fn apply_refinement(model: &mut EpigraphModel, inst: &Instance, tree: &PartitionTree, node: NodeId) -> Result<()> {
    let children = tree.node(node).children.clone();
    let Some((component, _)) = children.first().and_then(|&c| tree.node(c).fixed_here) else {
        return Err(Error::input(format!("node {node} has not been refined")));
    };
    let (lo, hi) = model.theta_bounds;
    for &c in &children {
        debug_assert_eq!(c, model.theta.len());
        let t = model.lp.add_named_var(format!("theta_{c}"), 0.0, lo, hi);
        model.theta.push(t);
        add_leaf_block(model, inst, t, &tree.node(c).fixed)?;
    }
    let mut coeffs = vec![(model.theta[node], 1.0)];
    for (kappa, &c) in children.iter().enumerate() {
        for level in 0..=inst.l() {
            let p = inst.table().prob(component, kappa, level);
            if p == 0.0 {
                continue;
            }
            let aux = mccormick_product(&mut model.lp, model.x[component][level], model.theta[c], lo, hi)?;
            coeffs.push((aux.z, -p));
            model.products.push(aux);
        }
    }
    model.lp.add_row(Row::ge(coeffs, 0.0))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SraOptions {
    /// Leaf gap threshold; `None` uses `1e-6 * (1 + |root bound|)`.
    pub eps: Option<f64>,
    pub time_limit: Option<Duration>,
    pub gap_tol: f64,
}

impl Default for SraOptions {
    fn default() -> Self {
        SraOptions {
            eps: None,
            time_limit: None,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SraResult {
    pub status: BnbStatus,
    pub x: Option<AllocationVector>,
    /// Model value of the incumbent (a lower bound on its true objective).
    pub objective: f64,
    /// Upper bound on the incumbent's true objective from the final tree.
    pub objective_upper: f64,
    pub bound: f64,
    pub eps: f64,
    pub refinements: usize,
    /// `(leaf, component)` pairs in refinement order.
    pub refinement_log: Vec<(NodeId, usize)>,
    pub tree: PartitionTree,
    pub nodes: usize,
    pub trace: Vec<TracePoint>,
    pub runtime_s: f64,
}

impl SraResult {
    pub fn gap(&self) -> f64 {
        if self.objective.is_finite() {
            (self.objective - self.bound).max(0.0) / self.objective.abs().max(1.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Runs the successive refinement algorithm.
pub fn run(inst: &Instance, opts: &SraOptions) -> Result<SraResult> {
    let start = Instant::now();
    let mut model = build_initial(inst)?;
    let eps = match opts.eps {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::input(format!("eps must be positive, got {e}"))),
        None => {
            let root = model.lp.solve(None)?;
            1e-6 * (1.0 + root.objective.abs())
        }
    };
    let mut tree = PartitionTree::new(inst.k());
    let mut log = Vec::new();
    let mut memo: HashMap<(Vec<(usize, usize)>, AllocationVector), f64> = HashMap::new();
    let binaries = model.binaries();
    let bnb_opts = BnbOptions {
        time_limit: opts.time_limit,
        gap_tol: opts.gap_tol,
        ..BnbOptions::default()
    };
    let mut lp = std::mem::take(&mut model.lp);
    let result = bnb::solve(&mut lp, &binaries, &bnb_opts, |lp, sol| {
        let x = model.allocation(&sol.primal);
        let mut gap = |fixed: &[(usize, usize)]| -> Result<f64> {
            let key = (fixed.to_vec(), x.clone());
            if let Some(&d) = memo.get(&key) {
                return Ok(d);
            }
            let d = fixed_gap(inst, fixed, &x)?;
            memo.insert(key, d);
            Ok(d)
        };
        let (leaf, d) = tree.select_leaf(|leaf| gap(&tree.node(leaf).fixed))?;
        if d <= eps {
            return Ok(Verdict::Accept);
        }
        let component = tree.select_component(inst, leaf, &x, &mut gap)?;
        tree.refine(leaf, component)?;
        log.push((leaf, component));
        model.lp = std::mem::take(lp);
        let applied = apply_refinement(&mut model, inst, &tree, leaf);
        *lp = std::mem::take(&mut model.lp);
        applied?;
        Ok(Verdict::Reject)
    })?;
    model.lp = lp;
    let x = result.solution.as_ref().map(|s| model.allocation(s));
    let objective_upper = match &x {
        Some(x) => inst.first_stage_cost(x) + tree_bounds(inst, &tree, x)?.upper,
        None => f64::INFINITY,
    };
    Ok(SraResult {
        status: result.status,
        x,
        objective: result.objective,
        objective_upper,
        bound: result.bound,
        eps,
        refinements: result.refinements,
        refinement_log: log,
        tree,
        nodes: result.nodes,
        trace: result.trace,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Rebuilds the model along a refinement log and returns the model optimum
/// after each prefix (the first entry is the root model).
pub fn replay_optima(inst: &Instance, log: &[(NodeId, usize)], gap_tol: f64) -> Result<Vec<f64>> {
    let mut model = build_initial(inst)?;
    let mut tree = PartitionTree::new(inst.k());
    let binaries = model.binaries();
    let opts = BnbOptions {
        gap_tol,
        ..BnbOptions::default()
    };
    let mut out = Vec::with_capacity(log.len() + 1);
    out.push(bnb::solve_mip(&mut model.lp.clone(), &binaries, &opts)?.objective);
    for &(leaf, component) in log {
        tree.refine(leaf, component)?;
        apply_refinement(&mut model, inst, &tree, leaf)?;
        out.push(bnb::solve_mip(&mut model.lp.clone(), &binaries, &opts)?.objective);
    }
    Ok(out)
}

/// Model value with `x` pinned.
pub fn model_value_at(model: &EpigraphModel, x: &AllocationVector) -> Result<f64> {
    let fix = model.fixings(x);
    let sol = model.lp.solve_with(&crate::lp::SolveOptions {
        bound_overrides: &fix,
        ..Default::default()
    })?;
    if !sol.is_optimal() {
        return Err(Error::Model(format!("epigraph model is {:?} at {x:?}", sol.status)));
    }
    Ok(sol.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceFile, Recourse, StateProbabilityTable};
    use crate::oracle::{brute_force_solve, exact_objective, feasible_allocations};
    use crate::snip::{self, AMode};

    fn small_grid(seed: u64, varying: usize) -> Instance {
        let a = snip::sparse_a_vector(3, 3, varying, seed);
        InstanceFile::grid(3, 3, seed, 2, 2, AMode::Explicit(a)).unwrap().build().unwrap()
    }

    #[test]
    fn root_model_matches_root_bound() {
        let inst = small_grid(1, 4);
        let model = build_initial(&inst).unwrap();
        let tree = PartitionTree::new(1);
        for x in feasible_allocations(&inst, 1000).unwrap().iter().step_by(7) {
            let v = model_value_at(&model, x).unwrap();
            let b = tree_bounds(&inst, &tree, x).unwrap();
            assert!((v - b.lower).abs() < 1e-7, "{x:?}: {v} vs {}", b.lower);
        }
    }

    #[test]
    fn full_refinement_is_exact_at_fixed_x() {
        let inst = small_grid(2, 3);
        let mut model = build_initial(&inst).unwrap();
        let mut tree = PartitionTree::new(1);
        let mut frontier = vec![0];
        for i in 0..inst.n() {
            let mut next = Vec::new();
            for leaf in frontier {
                next.extend(tree.refine(leaf, i).unwrap());
                apply_refinement(&mut model, &inst, &tree, leaf).unwrap();
            }
            frontier = next;
        }
        for x in feasible_allocations(&inst, 1000).unwrap() {
            let v = model_value_at(&model, &x).unwrap();
            let e = exact_objective(&inst, &x).unwrap();
            assert!((v - e).abs() < 1e-7, "{x:?}: {v} vs {e}");
        }
    }

    #[test]
    fn one_refinement_of_single_component_is_exact() {
        let inst = small_grid(5, 1);
        let mut model = build_initial(&inst).unwrap();
        let mut tree = PartitionTree::new(1);
        tree.refine(0, 0).unwrap();
        apply_refinement(&mut model, &inst, &tree, 0).unwrap();
        let x = AllocationVector::new(vec![2]);
        let v = model_value_at(&model, &x).unwrap();
        assert!((v - exact_objective(&inst, &x).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn deterministic_instance_needs_no_refinement() {
        let table = StateProbabilityTable::new(1, 1, &[vec![vec![1.0, 1.0], vec![0.0, 0.0]]]).unwrap();
        let rec = Recourse::capacity(1, vec![-1.0], Vec::new(), vec![0], vec![2.0], vec![1.0]).unwrap();
        let inst = Instance::new("det", table, vec![vec![0.0, 1.0]], 1, rec, Some((-2.0, 0.0))).unwrap();
        let r = run(&inst, &SraOptions::default()).unwrap();
        assert_eq!(r.refinements, 0);
        assert_eq!(r.x.unwrap().levels(), &[0]);
        assert!(r.objective.abs() < 1e-9);
    }

    #[test]
    fn huge_eps_returns_root_solution() {
        let inst = small_grid(3, 4);
        let r = run(
            &inst,
            &SraOptions {
                eps: Some(1e9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.refinements, 0);
        assert_eq!(r.tree.num_leaves(), 1);
    }

    #[test]
    fn agrees_with_oracle_on_small_grids() {
        for seed in 0..4 {
            let inst = small_grid(seed, 4);
            let oracle = brute_force_solve(&inst).unwrap();
            let r = run(
                &inst,
                &SraOptions {
                    eps: Some(1e-9),
                    gap_tol: 1e-9,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(r.status, BnbStatus::Optimal);
            assert!(
                (r.objective - oracle.value).abs() < 1e-6,
                "seed {seed}: sra {} oracle {}",
                r.objective,
                oracle.value
            );
            let x = r.x.unwrap();
            let truth = exact_objective(&inst, &x).unwrap();
            assert!(r.objective <= truth + 1e-7 && truth <= r.objective_upper + 1e-7);
            let optima = replay_optima(&inst, &r.refinement_log, 1e-9).unwrap();
            for w in optima.windows(2) {
                assert!(w[1] >= w[0] - 1e-7);
            }
            assert!(*optima.last().unwrap() <= oracle.value + 1e-7);
        }
    }
}
