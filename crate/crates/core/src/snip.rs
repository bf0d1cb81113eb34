//! Stochastic network interdiction test family: grid networks, the
//! interdiction success probability, max-flow evaluators and the penalized
//! max-flow used as the convex second-stage bound.
//!
//! State convention: for an arc, state `1` means interdicted (failed) and
//! `0` means available, so an arc's available capacity at a fractional
//! state `xi` is `u * (1 - xi)`.

use std::collections::VecDeque;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{StateLp, StateRow};
use crate::lp::{LinearProgram, LpStatus, Relation, Row};
use crate::{Error, Result};

/// Probability that an arc with parameter `a` ends in state `kappa` when
/// `level` units of attack are allocated to it:
/// `P(fail) = level / (level + a)` for `level > 0` and `0` for `level = 0`.
pub fn interdiction_probability(a: f64, kappa: usize, level: usize) -> f64 {
    let fail = if level == 0 {
        0.0
    } else {
        let l = level as f64;
        l / (l + a)
    };
    match kappa {
        1 => fail,
        0 => 1.0 - fail,
        _ => 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub cap: f64,
}

/// Directed network with a designated source and sink. The artificial
/// return arc `(t, s)` is kept apart from `arcs` with capacity `return_cap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<FlowArc>,
    pub return_cap: f64,
}

impl FlowNetwork {
    pub fn validate(&self) -> Result<()> {
        if self.source >= self.nodes || self.sink >= self.nodes || self.source == self.sink {
            return Err(Error::input("source/sink must be distinct existing nodes"));
        }
        for (k, arc) in self.arcs.iter().enumerate() {
            if arc.from >= self.nodes || arc.to >= self.nodes {
                return Err(Error::input(format!("arc {k} references a missing node")));
            }
            if !(arc.cap >= 0.0) || !arc.cap.is_finite() {
                return Err(Error::input(format!("arc {k} has invalid capacity {}", arc.cap)));
            }
        }
        if !(self.return_cap > 0.0) {
            return Err(Error::input("return arc capacity must be positive"));
        }
        Ok(())
    }

    pub fn dot(&self, failable: &[bool]) -> String {
        let mut out = String::from("digraph network {\n");
        let _ = writeln!(out, "  {} [label=\"s\", shape=box];", self.source);
        let _ = writeln!(out, "  {} [label=\"t\", shape=box];", self.sink);
        for (k, arc) in self.arcs.iter().enumerate() {
            let style = if failable.get(k).copied().unwrap_or(false) {
                ", color=red"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{}:{}\"{style}];",
                arc.from, arc.to, k, arc.cap
            );
        }
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"ret:{}\", style=dashed];",
            self.sink, self.source, self.return_cap
        );
        out.push_str("}\n");
        out
    }
}

/// Maximum `s`-`t` flow when arc `k` carries at most
/// `cap_k * availability[k]`. Dinic's algorithm on a residual graph.
pub fn max_flow(net: &FlowNetwork, availability: &[f64]) -> f64 {
    assert_eq!(availability.len(), net.arcs.len());
    let n = net.nodes;
    // Residual edges stored in pairs (e, e^1).
    let mut to = Vec::with_capacity(2 * net.arcs.len());
    let mut cap = Vec::with_capacity(2 * net.arcs.len());
    let mut adj = vec![Vec::new(); n];
    for (arc, &av) in net.arcs.iter().zip(availability) {
        let c = (arc.cap * av).max(0.0);
        adj[arc.from].push(to.len());
        to.push(arc.to);
        cap.push(c);
        adj[arc.to].push(to.len());
        to.push(arc.from);
        cap.push(0.0);
    }
    const EPS: f64 = 1e-12;
    let (s, t) = (net.source, net.sink);
    let mut total = 0.0;
    let mut level = vec![usize::MAX; n];
    let mut it = vec![0usize; n];
    loop {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &adj[v] {
                if cap[e] > EPS && level[to[e]] == usize::MAX {
                    level[to[e]] = level[v] + 1;
                    queue.push_back(to[e]);
                }
            }
        }
        if level[t] == usize::MAX || total >= net.return_cap {
            break;
        }
        it.iter_mut().for_each(|i| *i = 0);
        loop {
            let pushed = augment(s, t, f64::INFINITY, &adj, &to, &mut cap, &level, &mut it);
            if pushed <= EPS {
                break;
            }
            total += pushed;
        }
    }
    total.min(net.return_cap)
}

#[allow(clippy::too_many_arguments)]
fn augment(
    v: usize,
    t: usize,
    limit: f64,
    adj: &[Vec<usize>],
    to: &[usize],
    cap: &mut [f64],
    level: &[usize],
    it: &mut [usize],
) -> f64 {
    if v == t {
        return limit;
    }
    while it[v] < adj[v].len() {
        let e = adj[v][it[v]];
        let w = to[e];
        if cap[e] > 1e-12 && level[w] == level[v] + 1 {
            let d = augment(w, t, limit.min(cap[e]), adj, to, cap, level, it);
            if d > 1e-12 {
                cap[e] -= d;
                cap[e ^ 1] += d;
                return d;
            }
        }
        it[v] += 1;
    }
    0.0
}

/// Max flow as a circulation LP (flow conservation with the return arc,
/// arc capacities scaled by availability). Used to cross-check [`max_flow`].
pub fn max_flow_lp(net: &FlowNetwork, availability: &[f64]) -> Result<f64> {
    let mut lp = LinearProgram::new();
    let ys: Vec<usize> = net
        .arcs
        .iter()
        .zip(availability)
        .map(|(a, &av)| lp.add_var(0.0, 0.0, (a.cap * av).max(0.0)))
        .collect();
    let ts = lp.add_var(-1.0, 0.0, net.return_cap);
    add_conservation_rows(&mut lp, net, &ys, ts)?;
    let sol = lp.solve(None)?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.objective),
        s => Err(Error::Model(format!("max-flow LP ended {s:?}"))),
    }
}

fn add_conservation_rows(lp: &mut LinearProgram, net: &FlowNetwork, ys: &[usize], ts: usize) -> Result<()> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.nodes];
    for (arc, &y) in net.arcs.iter().zip(ys) {
        rows[arc.from].push((y, 1.0));
        rows[arc.to].push((y, -1.0));
    }
    rows[net.sink].push((ts, 1.0));
    rows[net.source].push((ts, -1.0));
    for coeffs in rows {
        lp.add_row(Row::eq(coeffs, 0.0))?;
    }
    Ok(())
}

/// Penalized max flow: `max y_ts - sum_k penalty[k] * y_k` over flows with
/// the full capacities `u_k`. For an integral failure vector and penalties of
/// at least one on the failed arcs this equals the max flow on surviving arcs.
pub fn penalty_recourse_value(net: &FlowNetwork, penalty: &[f64]) -> Result<f64> {
    let mut lp = LinearProgram::new();
    let ys: Vec<usize> = net
        .arcs
        .iter()
        .zip(penalty)
        .map(|(a, &p)| lp.add_var(p, 0.0, a.cap))
        .collect();
    let ts = lp.add_var(-1.0, 0.0, net.return_cap);
    add_conservation_rows(&mut lp, net, &ys, ts)?;
    let sol = lp.solve(None)?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.objective),
        s => Err(Error::Model(format!("penalized max-flow LP ended {s:?}"))),
    }
}

/// Convex second-stage template for interdiction: the LP dual of the
/// penalized max flow,
///
/// ```text
/// min  sum_k u_k b_k + R b_ret
/// s.t. b_k + p_i - p_j >= -M_k xi_k   for arc k = (i, j)
///      b_ret + p_t - p_s >= 1
///      b >= 0, p_s = 0
/// ```
///
/// where `xi_k` is the failure state of the component attached to arc `k`
/// (zero for arcs that cannot fail). Variables: potentials first, then one
/// `b` per arc, then `b_ret`.
pub fn build_snip_recourse(net: &FlowNetwork, component_arcs: &[usize], penalty: &[f64]) -> StateLp {
    let n = net.nodes;
    let mut lp = StateLp::default();
    for v in 0..n {
        if v == net.source {
            lp.push_var(0.0, 0.0, 0.0);
        } else {
            lp.push_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        }
    }
    let mut comp_of_arc = vec![None; net.arcs.len()];
    for (i, &k) in component_arcs.iter().enumerate() {
        comp_of_arc[k] = Some(i);
    }
    for (k, arc) in net.arcs.iter().enumerate() {
        let b = lp.push_var(arc.cap, 0.0, f64::INFINITY);
        let state_coeffs = comp_of_arc[k]
            .map(|i| vec![(i, -penalty[i])])
            .unwrap_or_default();
        lp.rows.push(StateRow {
            coeffs: vec![(b, 1.0), (arc.from, 1.0), (arc.to, -1.0)],
            relation: Relation::Ge,
            rhs: 0.0,
            state_coeffs,
        });
    }
    let b_ret = lp.push_var(net.return_cap, 0.0, f64::INFINITY);
    lp.rows.push(StateRow {
        coeffs: vec![(b_ret, 1.0), (net.sink, 1.0), (net.source, -1.0)],
        relation: Relation::Ge,
        rhs: 1.0,
        state_coeffs: Vec::new(),
    });
    lp
}

/// How the failure parameters `a_k` of a grid are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AMode {
    /// `a_k = budget * levels / |A'|` on every failable arc.
    Uniform,
    /// One value per failable (interior) arc, in arc order.
    Explicit(Vec<f64>),
}

/// Grid interdiction network: `rows x cols` nodes joined by arcs in both
/// directions, a source feeding the left column and a sink fed by the right
/// column. Interior arcs can fail; source/sink arcs cannot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNetwork {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub net: FlowNetwork,
    pub a: Vec<f64>,
    pub failable: Vec<bool>,
}

impl GridNetwork {
    /// Physical arc count (the artificial return arc is not counted).
    pub fn arc_count(&self) -> usize {
        self.net.arcs.len()
    }

    pub fn failable_arcs(&self) -> Vec<usize> {
        (0..self.arc_count()).filter(|&k| self.failable[k]).collect()
    }

    /// Arcs whose state is actually random (`a_k > 0`), in arc order.
    pub fn varying_arcs(&self) -> Vec<usize> {
        (0..self.arc_count())
            .filter(|&k| self.failable[k] && self.a[k] > 0.0)
            .collect()
    }

    pub fn dot(&self) -> String {
        self.net.dot(&self.failable)
    }
}

pub fn generate_grid(
    rows: usize,
    cols: usize,
    seed: u64,
    a_mode: &AMode,
    budget: u32,
    levels: usize,
) -> Result<GridNetwork> {
    if rows < 2 || cols < 2 {
        return Err(Error::input("grid needs at least 2 rows and 2 columns"));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let source = rows * cols;
    let sink = source + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arcs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                arcs.push((id(r, c), id(r, c + 1)));
                arcs.push((id(r, c + 1), id(r, c)));
            }
            if r + 1 < rows {
                arcs.push((id(r, c), id(r + 1, c)));
                arcs.push((id(r + 1, c), id(r, c)));
            }
        }
    }
    let interior = arcs.len();
    let mut flow_arcs: Vec<FlowArc> = arcs
        .into_iter()
        .map(|(from, to)| FlowArc {
            from,
            to,
            cap: rng.gen_range(1..=10) as f64,
        })
        .collect();
    let big: f64 = flow_arcs.iter().map(|a| a.cap).sum::<f64>() + 1.0;
    for r in 0..rows {
        flow_arcs.push(FlowArc { from: source, to: id(r, 0), cap: big });
    }
    for r in 0..rows {
        flow_arcs.push(FlowArc { from: id(r, cols - 1), to: sink, cap: big });
    }
    let total = flow_arcs.len();
    let failable: Vec<bool> = (0..total).map(|k| k < interior).collect();
    let mut a = vec![0.0; total];
    match a_mode {
        AMode::Uniform => {
            let v = (budget as f64 * levels as f64) / interior as f64;
            a[..interior].iter_mut().for_each(|x| *x = v);
        }
        AMode::Explicit(values) => {
            if values.len() != interior {
                return Err(Error::input(format!(
                    "explicit a vector has {} entries, grid has {interior} failable arcs",
                    values.len()
                )));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::input("a_k must be finite and nonnegative"));
            }
            a[..interior].copy_from_slice(values);
        }
    }
    Ok(GridNetwork {
        rows,
        cols,
        seed,
        net: FlowNetwork {
            nodes: rows * cols + 2,
            source,
            sink,
            arcs: flow_arcs,
            return_cap: big,
        },
        a,
        failable,
    })
}

/// Explicit `a` vector with `count` randomly chosen interior arcs set to
/// values drawn from `[0.5, 2]` and the rest zero (non-failing).
pub fn sparse_a_vector(rows: usize, cols: usize, count: usize, seed: u64) -> Vec<f64> {
    let interior = 2 * rows * (cols - 1) + 2 * (rows - 1) * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a5a5);
    let mut a = vec![0.0; interior];
    let mut picked = 0;
    while picked < count.min(interior) {
        let k = rng.gen_range(0..interior);
        if a[k] == 0.0 {
            a[k] = (rng.gen_range(1..=4) as f64) * 0.5;
            picked += 1;
        }
    }
    a
}
