//! Multilinear deterministic equivalent: one second-stage block per joint
//! state, weighted by the product of per-component probabilities, with the
//! products linearized left to right.

use std::time::{Duration, Instant};

use crate::bnb::{self, BnbOptions, BnbStatus, TracePoint};
use crate::instance::{AllocationVector, Instance};
use crate::linearize::{chain_multilinear, BinaryExpr};
use crate::lp::{LinearProgram, Row};
use crate::sra::EpigraphModel;
use crate::{Error, Result};

/// Most scenarios the deterministic equivalent will materialize; each one
/// carries a full copy of the second-stage LP.
pub const MSP_SCENARIO_LIMIT: u128 = 1 << 16;

#[derive(Clone, Debug)]
pub struct MspModel {
    /// Shares the allocation layout of the epigraph model.
    pub base: EpigraphModel,
    pub scenarios: Vec<Vec<usize>>,
    /// Tail `t_s >= q y^s` and chain output of each kept scenario.
    pub tails: Vec<usize>,
    pub outputs: Vec<usize>,
}

pub fn build_msp(inst: &Instance) -> Result<MspModel> {
    let required = inst.scenario_count();
    if required > MSP_SCENARIO_LIMIT {
        return Err(Error::Capacity {
            what: "deterministic equivalent scenarios",
            required,
            limit: MSP_SCENARIO_LIMIT,
        });
    }
    let scenarios = inst.enumerate_scenarios()?;
    let mut lp = LinearProgram::new();
    let x: Vec<Vec<usize>> = (0..inst.n())
        .map(|i| {
            (0..=inst.l())
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

    let bounds = inst.theta_bounds();
    let template = inst.recourse().lower();
    let mut tails = Vec::new();
    let mut outputs = Vec::new();
    let mut kept = Vec::new();
    for state in scenarios {
        let mut factors = Vec::with_capacity(inst.varying().len());
        let mut impossible = false;
        for &i in inst.varying() {
            let terms: Vec<(usize, f64)> = (0..=inst.l())
                .map(|level| (x[i][level], inst.table().prob(i, state[i], level)))
                .filter(|&(_, p)| p != 0.0)
                .collect();
            if terms.is_empty() {
                impossible = true;
                break;
            }
            if terms.len() == inst.l() + 1 && terms.iter().all(|&(_, p)| p == 1.0) {
                continue;
            }
            factors.push(BinaryExpr { constant: 0.0, terms });
        }
        if impossible {
            continue;
        }
        let xi: Vec<f64> = state.iter().map(|&s| s as f64).collect();
        let y: Vec<usize> = (0..template.num_vars())
            .map(|j| lp.add_var(0.0, template.lower[j], template.upper[j]))
            .collect();
        let mut rows: Vec<Row> = template
            .rows
            .iter()
            .map(|r| Row::new(r.coeffs.iter().map(|&(j, a)| (y[j], a)).collect(), r.relation, r.rhs_at(&xi)))
            .collect();
        let t = lp.add_var(0.0, bounds.0, bounds.1);
        let mut epi = vec![(t, 1.0)];
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
        let out = if factors.is_empty() {
            t
        } else {
            chain_multilinear(&mut lp, &factors, t, bounds)?.output
        };
        lp.set_cost(out, lp.cost()[out] + 1.0);
        tails.push(t);
        outputs.push(out);
        kept.push(state);
    }
    Ok(MspModel {
        base: EpigraphModel {
            lp,
            x,
            theta: Vec::new(),
            products: Vec::new(),
            theta_bounds: bounds,
        },
        scenarios: kept,
        tails,
        outputs,
    })
}

#[derive(Clone, Debug)]
pub struct MspResult {
    pub status: BnbStatus,
    pub x: Option<AllocationVector>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub scenarios: usize,
    pub trace: Vec<TracePoint>,
    pub runtime_s: f64,
}

impl MspResult {
    pub fn gap(&self) -> f64 {
        if self.objective.is_finite() {
            (self.objective - self.bound).max(0.0) / self.objective.abs().max(1.0)
        } else {
            f64::INFINITY
        }
    }
}

pub fn solve_msp(inst: &Instance, time_limit: Option<Duration>, gap_tol: f64) -> Result<MspResult> {
    let start = Instant::now();
    let mut model = build_msp(inst)?;
    let binaries = model.base.binaries();
    let opts = BnbOptions {
        time_limit,
        gap_tol,
        ..BnbOptions::default()
    };
    let r = bnb::solve_mip(&mut model.base.lp, &binaries, &opts)?;
    Ok(MspResult {
        status: r.status,
        x: r.solution.as_ref().map(|s| model.base.allocation(s)),
        objective: r.objective,
        bound: r.bound,
        nodes: r.nodes,
        scenarios: model.scenarios.len(),
        trace: r.trace,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
