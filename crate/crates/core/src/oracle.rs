//! Brute-force ground truth: enumerate every feasible allocation and every
//! joint state to get exact objectives.

use rayon::prelude::*;

use crate::instance::{for_each_state, state_count, AllocationVector, Instance, SCENARIO_LIMIT};
use crate::{Error, Result};

/// Upper limit on `sum_x (states enumerated for x)` in [`brute_force_solve`].
pub const WORK_LIMIT: u128 = 1 << 26;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub x: AllocationVector,
    pub value: f64,
    /// Every feasible allocation with its objective, in lexicographic order.
    pub table: Vec<(AllocationVector, f64)>,
}

/// Components whose state is random under `x`, plus the sure state of the
/// others.
fn split_components(inst: &Instance, x: &AllocationVector) -> (Vec<usize>, Vec<usize>) {
    let mut active = Vec::new();
    let mut base = vec![0; inst.n()];
    for i in 0..inst.n() {
        let dist = inst.table().distribution(i, x.level(i));
        match dist.iter().position(|&p| p == 1.0) {
            Some(sure) => base[i] = sure,
            None => active.push(i),
        }
    }
    (active, base)
}

fn work_for(inst: &Instance, x: &AllocationVector) -> u128 {
    state_count(split_components(inst, x).0.len(), inst.k())
}

/// `c x + sum_xi P[xi | x] Theta(xi)`, enumerating only components whose
/// state is random under `x`.
pub fn exact_objective(inst: &Instance, x: &AllocationVector) -> Result<f64> {
    inst.check_allocation(x)?;
    let (active, base) = split_components(inst, x);
    let required = state_count(active.len(), inst.k());
    if required > SCENARIO_LIMIT {
        return Err(Error::Capacity {
            what: "exact objective",
            required,
            limit: SCENARIO_LIMIT,
        });
    }
    let recourse = inst.recourse();
    let mut total = 0.0;
    let mut err = None;
    for_each_state(&active, inst.k(), base, |state| {
        if err.is_some() {
            return;
        }
        let p: f64 = active
            .iter()
            .map(|&i| inst.table().prob(i, state[i], x.level(i)))
            .product();
        if p == 0.0 {
            return;
        }
        match recourse.scenario_value(state) {
            Ok(v) => total += p * v,
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(inst.first_stage_cost(x) + total),
    }
}

/// Feasible allocations (`sum levels <= budget * L`) in lexicographic order.
/// Fails once more than `limit` allocations exist.
pub fn feasible_allocations(inst: &Instance, limit: u128) -> Result<Vec<AllocationVector>> {
    fn rec(
        i: usize,
        left: usize,
        l: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<AllocationVector>,
        limit: u128,
    ) -> bool {
        if i == cur.len() {
            out.push(AllocationVector::new(cur.clone()));
            return (out.len() as u128) <= limit;
        }
        for level in 0..=l.min(left) {
            cur[i] = level;
            if !rec(i + 1, left - level, l, cur, out, limit) {
                return false;
            }
        }
        cur[i] = 0;
        true
    }
    let mut out = Vec::new();
    let mut cur = vec![0; inst.n()];
    if !rec(0, inst.budget_rhs(), inst.l(), &mut cur, &mut out, limit) {
        return Err(Error::Capacity {
            what: "allocation enumeration",
            required: limit + 1,
            limit,
        });
    }
    Ok(out)
}

/// Exact optimum by double enumeration. Ties (within `1e-9` relative) go to
/// the lexicographically smallest allocation.
pub fn brute_force_solve(inst: &Instance) -> Result<OracleResult> {
    let xs = feasible_allocations(inst, WORK_LIMIT)?;
    let required: u128 = xs.iter().map(|x| work_for(inst, x)).sum();
    if required > WORK_LIMIT {
        return Err(Error::Capacity {
            what: "brute-force enumeration",
            required,
            limit: WORK_LIMIT,
        });
    }
    let values: Vec<f64> = xs
        .par_iter()
        .map(|x| exact_objective(inst, x))
        .collect::<Result<_>>()?;
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * best.abs().max(1.0);
    let pick = values.iter().position(|&v| v <= best + tol).expect("at least the zero allocation");
    Ok(OracleResult {
        x: xs[pick].clone(),
        value: values[pick],
        table: xs.into_iter().zip(values).collect(),
    })
}
