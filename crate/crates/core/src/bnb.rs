//! Best-bound branch-and-bound over mixed-binary programs.
//!
//! Every integral LP solution is offered to a callback before it may become
//! the incumbent. The callback can reject it after appending rows (and new
//! columns) to the program; the rows then apply to every open node and the
//! node that produced the candidate is re-solved.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write;
use std::time::{Duration, Instant};

use crate::lp::{Basis, LinearProgram, LpSolution, LpStatus, SolveOptions};
use crate::{Error, Result};

pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    /// The callback appended rows or columns that cut off or tighten the
    /// candidate.
    Reject,
}

#[derive(Clone, Debug)]
pub struct BnbOptions {
    pub time_limit: Option<Duration>,
    /// Search stops once `UB - LB <= gap_tol * max(1, |UB|)`.
    pub gap_tol: f64,
    /// Consecutive rejections at one node whose re-solve neither raises the
    /// objective by `1e-9` nor changes the binaries. Exceeding it is an
    /// error, which guards against callbacks that never converge.
    pub stall_limit: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            time_limit: None,
            gap_tol: 1e-6,
            stall_limit: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimedOut,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub time_s: f64,
    pub incumbent: f64,
    pub bound: f64,
    pub open_nodes: usize,
    pub refinements: usize,
}

#[derive(Clone, Debug)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub solution: Option<Vec<f64>>,
    /// Incumbent objective (`+inf` without one).
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub refinements: usize,
    pub trace: Vec<TracePoint>,
}

impl BnbResult {
    pub fn timed_out(&self) -> bool {
        self.status == BnbStatus::TimedOut
    }

    pub fn gap(&self) -> f64 {
        if self.objective.is_finite() {
            (self.objective - self.bound).max(0.0) / self.objective.abs().max(1.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Renders the trace as CSV.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("time_s,incumbent,bound,open_nodes,refinements\n");
    for p in trace {
        let _ = writeln!(
            out,
            "{:.6},{},{},{},{}",
            p.time_s, p.incumbent, p.bound, p.open_nodes, p.refinements
        );
    }
    out
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64, f64)>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: "greater" means dequeued first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn most_fractional(x: &[f64], binaries: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = (x[j] - x[j].round()).abs();
        if frac > INT_TOL && best.map_or(true, |(b, f)| frac > f || (frac == f && j < b)) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

fn same_binaries(a: &[f64], b: &[f64], binaries: &[usize]) -> bool {
    binaries.iter().all(|&j| (a[j] - b[j]).abs() <= INT_TOL)
}

/// Minimizes `lp` with `binaries` restricted to `{0, 1}`.
pub fn solve(
    lp: &mut LinearProgram,
    binaries: &[usize],
    opts: &BnbOptions,
    mut on_candidate: impl FnMut(&mut LinearProgram, &LpSolution) -> Result<Verdict>,
) -> Result<BnbResult> {
    for &j in binaries {
        let (lo, hi) = lp.bounds(j);
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::input(format!("binary variable {j} has bounds [{lo}, {hi}]")));
        }
    }
    let start = Instant::now();
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        fixings: Vec::new(),
        basis: None,
    });
    let mut incumbent: Option<Vec<f64>> = None;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut nodes = 0;
    let mut refinements = 0;
    let mut trace = Vec::new();
    let cutoff = |ub: f64| ub - opts.gap_tol * ub.abs().max(1.0);
    let mut status = BnbStatus::Optimal;

    'search: while let Some(node) = heap.pop() {
        lb = lb.max(node.bound.min(ub));
        if node.bound >= cutoff(ub) {
            // best-first: nothing left can improve enough
            heap.clear();
            break;
        }
        if opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            status = BnbStatus::TimedOut;
            break;
        }
        nodes += 1;
        let mut basis = node.basis;
        let mut stalled = 0;
        let mut last: Option<(f64, Vec<f64>)> = None;
        loop {
            if let Some(b) = basis.as_mut() {
                b.extend_to(lp);
            }
            let sol = lp.solve_with(&SolveOptions {
                warm: basis.as_ref(),
                bound_overrides: &node.fixings,
                max_iterations: 0,
            })?;
            match sol.status {
                LpStatus::Infeasible => continue 'search,
                LpStatus::Unbounded => {
                    if incumbent.is_none() && nodes == 1 {
                        status = BnbStatus::Unbounded;
                        break 'search;
                    }
                    return Err(Error::Model("relaxation became unbounded below".into()));
                }
                LpStatus::Optimal => {}
            }
            if nodes == 1 && trace.is_empty() {
                lb = lb.max(sol.objective);
                trace.push(point(&start, ub, lb, heap.len() + 1, refinements));
            }
            if sol.objective >= cutoff(ub) {
                continue 'search;
            }
            if let Some(j) = most_fractional(&sol.primal, binaries) {
                let v = sol.primal[j];
                for (lo, hi) in [(0.0, 0.0), (1.0, 1.0)] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, lo, hi));
                    seq += 1;
                    heap.push(Node {
                        bound: sol.objective,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                        basis: Some(sol.basis.clone()),
                    });
                }
                debug_assert!(v > 0.0 && v < 1.0);
                continue 'search;
            }
            let (rows, vars) = (lp.num_rows(), lp.num_vars());
            match on_candidate(lp, &sol)? {
                Verdict::Accept => {
                    if sol.objective < ub {
                        ub = sol.objective;
                        incumbent = Some(sol.primal.clone());
                        trace.push(point(&start, ub, lb.min(ub), heap.len(), refinements));
                    }
                    continue 'search;
                }
                Verdict::Reject => {
                    if lp.num_rows() == rows && lp.num_vars() == vars {
                        return Err(Error::Callback("rejected a candidate without adding rows".into()));
                    }
                    refinements += 1;
                    if let Some((obj, x)) = &last {
                        if sol.objective < obj + 1e-9 && same_binaries(x, &sol.primal, binaries) {
                            stalled += 1;
                            if stalled > opts.stall_limit {
                                return Err(Error::Callback(format!(
                                    "{stalled} rejections without progress at one node"
                                )));
                            }
                        } else {
                            stalled = 0;
                        }
                    }
                    last = Some((sol.objective, sol.primal.clone()));
                    let open_min = heap.peek().map_or(f64::INFINITY, |n| n.bound);
                    lb = lb.max(open_min.min(sol.objective).min(ub));
                    trace.push(point(&start, ub, lb.min(ub), heap.len() + 1, refinements));
                    basis = Some(sol.basis);
                    if opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
                        heap.push(Node {
                            bound: sol.objective,
                            depth: node.depth,
                            seq: node.seq,
                            fixings: node.fixings,
                            basis,
                        });
                        status = BnbStatus::TimedOut;
                        break 'search;
                    }
                }
            }
        }
    }

    let bound = match status {
        BnbStatus::TimedOut => heap.iter().map(|n| n.bound).fold(ub, f64::min).max(lb),
        _ => ub.max(lb),
    };
    let bound = if incumbent.is_some() || status == BnbStatus::TimedOut {
        bound
    } else {
        f64::INFINITY
    };
    if status == BnbStatus::Optimal && incumbent.is_none() {
        status = BnbStatus::Infeasible;
    }
    trace.push(point(&start, ub, bound.min(ub), heap.len(), refinements));
    Ok(BnbResult {
        status,
        solution: incumbent,
        objective: ub,
        bound,
        nodes,
        refinements,
        trace,
    })
}

/// Branch-and-bound without a callback.
pub fn solve_mip(lp: &mut LinearProgram, binaries: &[usize], opts: &BnbOptions) -> Result<BnbResult> {
    solve(lp, binaries, opts, |_, _| Ok(Verdict::Accept))
}

fn point(start: &Instant, ub: f64, lb: f64, open: usize, refinements: usize) -> TracePoint {
    TracePoint {
        time_s: start.elapsed().as_secs_f64(),
        incumbent: ub,
        bound: lb,
        open_nodes: open,
        refinements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Row;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_lp_needs_no_branching() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(-1.0, 0.0, 4.0);
        lp.add_row(Row::le(vec![(a, 2.0)], 3.0)).unwrap();
        let r = solve_mip(&mut lp, &[], &BnbOptions::default()).unwrap();
        assert_eq!(r.status, BnbStatus::Optimal);
        assert!((r.objective + 1.5).abs() < 1e-9);
        assert_eq!(r.nodes, 1);
    }

    #[test]
    fn two_item_knapsack() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(-3.0, 0.0, 1.0);
        let b = lp.add_var(-2.0, 0.0, 1.0);
        lp.add_row(Row::le(vec![(a, 1.0), (b, 1.0)], 1.0)).unwrap();
        let r = solve_mip(&mut lp, &[a, b], &BnbOptions::default()).unwrap();
        assert!((r.objective + 3.0).abs() < 1e-9);
        assert_eq!(r.solution.unwrap()[a], 1.0);
    }

    #[test]
    fn infeasible_root() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(0.0, 0.0, 1.0);
        lp.add_row(Row::ge(vec![(a, 1.0)], 2.0)).unwrap();
        let r = solve_mip(&mut lp, &[a], &BnbOptions::default()).unwrap();
        assert_eq!(r.status, BnbStatus::Infeasible);
    }

    #[test]
    fn lazy_rows_reshape_the_optimum() {
        // min -a - b with a, b binary; lazily enforce a + b <= 1 then a <= 0.
        let mut lp = LinearProgram::new();
        let a = lp.add_var(-1.0, 0.0, 1.0);
        let b = lp.add_var(-1.0, 0.0, 1.0);
        let mut calls = 0;
        let r = solve(&mut lp, &[a, b], &BnbOptions::default(), |lp, sol| {
            calls += 1;
            if sol.primal[a] + sol.primal[b] > 1.5 {
                lp.add_row(Row::le(vec![(a, 1.0), (b, 1.0)], 1.0)).unwrap();
                return Ok(Verdict::Reject);
            }
            if sol.primal[a] > 0.5 {
                lp.add_row(Row::le(vec![(a, 1.0)], 0.0)).unwrap();
                return Ok(Verdict::Reject);
            }
            Ok(Verdict::Accept)
        })
        .unwrap();
        assert!((r.objective + 1.0).abs() < 1e-9);
        assert!(r.refinements >= 1);
        let s = r.solution.unwrap();
        assert_eq!((s[a], s[b]), (0.0, 1.0));
        // global bound never decreases along the trace
        for w in r.trace.windows(2) {
            assert!(w[1].bound >= w[0].bound - 1e-12);
        }
        let csv = trace_csv(&r.trace);
        assert!(csv.starts_with("time_s,incumbent,bound,open_nodes,refinements\n"));
    }

    #[test]
    fn reject_without_rows_is_an_error() {
        let mut lp = LinearProgram::new();
        lp.add_var(1.0, 0.0, 1.0);
        let r = solve(&mut lp, &[0], &BnbOptions::default(), |_, _| Ok(Verdict::Reject));
        assert!(matches!(r, Err(Error::Callback(_))));
    }

    #[test]
    fn zero_time_limit_reports_timeout() {
        let mut lp = LinearProgram::new();
        lp.add_var(1.0, 0.0, 1.0);
        let opts = BnbOptions {
            time_limit: Some(Duration::ZERO),
            ..Default::default()
        };
        let r = solve_mip(&mut lp, &[0], &opts).unwrap();
        assert!(r.timed_out());
    }

    /// Random mixed-binary program, bounded and feasible at a planted point.
    pub(crate) fn random_mip(rng: &mut ChaCha8Rng) -> (LinearProgram, Vec<usize>) {
        let nb = rng.gen_range(1..=12);
        let nc = rng.gen_range(0..=4);
        let mut lp = LinearProgram::new();
        let bins: Vec<usize> = (0..nb).map(|_| lp.add_var(rng.gen_range(-5.0..5.0), 0.0, 1.0)).collect();
        let conts: Vec<usize> = (0..nc).map(|_| lp.add_var(rng.gen_range(-3.0..3.0), 0.0, 5.0)).collect();
        let mut plant: Vec<f64> = bins.iter().map(|_| rng.gen_range(0..=1) as f64).collect();
        plant.extend(conts.iter().map(|_| rng.gen_range(0.0..5.0)));
        for _ in 0..rng.gen_range(1..=8) {
            let k = rng.gen_range(1..=plant.len().min(5));
            let coeffs: Vec<(usize, f64)> = (0..k)
                .map(|_| (rng.gen_range(0..plant.len()), rng.gen_range(-4.0..4.0)))
                .collect();
            let act: f64 = coeffs.iter().map(|&(j, a)| a * plant[j]).sum();
            lp.add_row(Row::le(coeffs, act + rng.gen_range(0.0..2.0))).unwrap();
        }
        (lp, bins)
    }

    pub(crate) fn enumerate(lp: &LinearProgram, bins: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << bins.len()) {
            let fix: Vec<(usize, f64, f64)> = bins
                .iter()
                .enumerate()
                .map(|(k, &j)| {
                    let v = ((mask >> k) & 1) as f64;
                    (j, v, v)
                })
                .collect();
            let sol = lp
                .solve_with(&SolveOptions {
                    bound_overrides: &fix,
                    ..Default::default()
                })
                .unwrap();
            if sol.is_optimal() {
                best = best.min(sol.objective);
            }
        }
        best
    }

    #[test]
    fn random_programs_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..40 {
            let (mut lp, bins) = random_mip(&mut rng);
            let want = enumerate(&lp, &bins);
            let opts = BnbOptions {
                gap_tol: 1e-9,
                ..Default::default()
            };
            let r = solve_mip(&mut lp, &bins, &opts).unwrap();
            assert_eq!(r.status, BnbStatus::Optimal);
            assert!((r.objective - want).abs() <= 1e-7 * want.abs().max(1.0), "case {case}");
        }
    }
}
