//! Bounded revised simplex over `[A | I] (x, s) = 0`.
//!
//! Every row `a x (rel) b` gets a logical `s = -a x` whose bounds encode the
//! relation, so the right-hand side is always zero and the all-logical basis
//! is the identity. The basis inverse is kept in product form (a list of eta
//! columns) and rebuilt from scratch every [`REFACTOR_EVERY`] updates.

use super::{
    default_status, Basis, LinearProgram, LpError, LpSolution, LpStatus, Relation, SolveOptions,
    VarStatus, FEAS_TOL, OPT_TOL, PIVOT_TOL, REFACTOR_EVERY,
};

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;
const ETA_DROP: f64 = 1e-14;

struct Eta {
    pivot: usize,
    pivot_coef: f64,
    others: Vec<(usize, f64)>,
}

enum Step {
    Continue,
    Done,
    Unbounded,
    Infeasible,
    /// Numerical trouble: refactor and retry.
    Retry,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    etas: Vec<Eta>,
    updates: usize,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
    log: Vec<String>,
}

pub(super) fn solve(lp: &LinearProgram, opts: &SolveOptions<'_>) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(lp, opts)?;
    s.refactor();
    s.compute_basics();

    if opts.warm.is_some() && s.primal_infeasibility() > FEAS_TOL && s.is_dual_feasible() {
        match s.run_dual()? {
            Step::Infeasible => return Ok(s.finish(LpStatus::Infeasible)),
            _ => {}
        }
    }

    let mut retries = 0;
    loop {
        let status = s.run_primal()?;
        if status != LpStatus::Optimal {
            return Ok(s.finish(status));
        }
        // Clean recomputation before declaring victory.
        s.refactor();
        s.compute_basics();
        if s.primal_infeasibility() <= FEAS_TOL && s.is_dual_feasible() {
            return Ok(s.finish(LpStatus::Optimal));
        }
        retries += 1;
        s.log
            .push(format!("iteration {}: drift after refactor, resuming", s.iterations));
        if retries > 5 {
            return Err(s.numerical("could not reach a clean optimal basis"));
        }
    }
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, opts: &SolveOptions<'_>) -> Result<Self, LpError> {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for j in 0..n {
            let (l, h) = lp.bounds(j);
            lo.push(l);
            hi.push(h);
        }
        for &(j, l, h) in opts.bound_overrides {
            if j >= n {
                return Err(LpError::UnknownVariable { var: j, num_vars: n });
            }
            if !(l <= h) {
                return Err(LpError::BadBounds { var: j, lo: l, hi: h });
            }
            lo[j] = l;
            hi[j] = h;
        }
        for row in lp.rows() {
            let (l, h) = match row.relation {
                Relation::Le => (-row.rhs, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, -row.rhs),
                Relation::Eq => (-row.rhs, -row.rhs),
            };
            lo.push(l);
            hi.push(h);
        }
        let mut cost = lp.cost().to_vec();
        cost.resize(n + m, 0.0);

        let mut status: Vec<VarStatus> = match opts.warm {
            Some(b) => {
                let mut b = b.clone();
                if b.vars.len() > n || b.rows.len() > m {
                    b = Basis::slack(lp);
                } else {
                    b.extend_to(lp);
                }
                b.vars.into_iter().chain(b.rows).collect()
            }
            None => (0..n)
                .map(|j| default_status(lo[j], hi[j]))
                .chain(std::iter::repeat(VarStatus::Basic).take(m))
                .collect(),
        };
        for j in 0..n + m {
            status[j] = sanitize(status[j], lo[j], hi[j]);
        }
        let max_iterations = if opts.max_iterations > 0 {
            opts.max_iterations
        } else {
            50 * (n + m) + 10_000
        };
        let mut s = Simplex {
            lp,
            n,
            m,
            lo,
            hi,
            cost,
            x: vec![0.0; n + m],
            status,
            head: vec![usize::MAX; m],
            etas: Vec::new(),
            updates: 0,
            iterations: 0,
            max_iterations,
            degenerate_run: 0,
            bland: false,
            log: Vec::new(),
        };
        for j in 0..n + m {
            s.set_nonbasic_value(j);
        }
        Ok(s)
    }

    fn numerical(&self, msg: &str) -> LpError {
        LpError::Numerical {
            message: msg.to_string(),
            iterations: self.iterations,
            log: self.log.clone(),
        }
    }

    fn set_nonbasic_value(&mut self, j: usize) {
        self.x[j] = match self.status[j] {
            VarStatus::AtLower => self.lo[j],
            VarStatus::AtUpper => self.hi[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => return,
        };
    }

    // ---- column access -------------------------------------------------

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.lp.column(j).iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            y[j - self.n]
        }
    }

    fn scatter_column(&self, j: usize, v: &mut [f64], scale: f64) {
        if j < self.n {
            for &(i, a) in self.lp.column(j) {
                v[i] += a * scale;
            }
        } else {
            v[j - self.n] += scale;
        }
    }

    fn column_len(&self, j: usize) -> usize {
        if j < self.n {
            self.lp.column(j).len()
        } else {
            1
        }
    }

    // ---- basis inverse ---------------------------------------------------

    fn ftran(&self, v: &mut [f64]) {
        for eta in &self.etas {
            let t = v[eta.pivot];
            if t != 0.0 {
                v[eta.pivot] = t * eta.pivot_coef;
                for &(i, e) in &eta.others {
                    v[i] += e * t;
                }
            }
        }
    }

    fn btran(&self, u: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = eta.pivot_coef * u[eta.pivot];
            for &(i, e) in &eta.others {
                s += e * u[i];
            }
            u[eta.pivot] = s;
        }
    }

    fn push_eta(&mut self, w: &[f64], p: usize) {
        let wp = w[p];
        let others = w
            .iter()
            .enumerate()
            .filter(|&(i, &wi)| i != p && wi.abs() > ETA_DROP)
            .map(|(i, &wi)| (i, -wi / wp))
            .collect();
        self.etas.push(Eta {
            pivot: p,
            pivot_coef: 1.0 / wp,
            others,
        });
    }

    /// Rebuilds the eta file for the current set of basic variables. Columns
    /// that turn out dependent are made nonbasic and replaced by logicals.
    fn refactor(&mut self) {
        self.etas.clear();
        self.updates = 0;
        let (n, m) = (self.n, self.m);
        let mut owner = vec![usize::MAX; m];
        for i in 0..m {
            if self.status[n + i] == VarStatus::Basic {
                owner[i] = n + i;
            }
        }
        let mut structs: Vec<usize> = (0..n)
            .filter(|&j| self.status[j] == VarStatus::Basic)
            .collect();
        structs.sort_by_key(|&j| (self.column_len(j), j));
        // Columns are sparse and so are their transforms early on; track
        // touched entries instead of sweeping all `m` rows per column.
        let mut v = vec![0.0; m];
        let mut mark = vec![false; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut rejected = Vec::new();
        for j in structs {
            for &i in &touched {
                v[i] = 0.0;
                mark[i] = false;
            }
            touched.clear();
            self.scatter_column(j, &mut v, 1.0);
            if j < n {
                for &(i, _) in self.lp.column(j) {
                    if !mark[i] {
                        mark[i] = true;
                        touched.push(i);
                    }
                }
            }
            for eta in &self.etas {
                let t = v[eta.pivot];
                if t != 0.0 {
                    v[eta.pivot] = t * eta.pivot_coef;
                    for &(i, e) in &eta.others {
                        if !mark[i] {
                            mark[i] = true;
                            touched.push(i);
                        }
                        v[i] += e * t;
                    }
                }
            }
            let mut best = None;
            let mut best_abs = 0.0;
            for &i in &touched {
                if owner[i] == usize::MAX && v[i].abs() > best_abs {
                    best_abs = v[i].abs();
                    best = Some(i);
                }
            }
            match best {
                Some(p) if best_abs > 1e-9 => {
                    let wp = v[p];
                    let others = touched
                        .iter()
                        .filter(|&&i| i != p && v[i].abs() > ETA_DROP)
                        .map(|&i| (i, -v[i] / wp))
                        .collect();
                    self.etas.push(Eta {
                        pivot: p,
                        pivot_coef: 1.0 / wp,
                        others,
                    });
                    owner[p] = j;
                }
                _ => rejected.push(j),
            }
        }
        if !rejected.is_empty() {
            self.log.push(format!(
                "iteration {}: refactor dropped {} dependent columns",
                self.iterations,
                rejected.len()
            ));
        }
        for j in rejected {
            self.status[j] = default_status(self.lo[j], self.hi[j]);
            let clamped = self.x[j].clamp(self.lo[j], self.hi[j]);
            if self.status[j] != VarStatus::Free
                && self.hi[j].is_finite()
                && (self.hi[j] - clamped) < (clamped - self.lo[j])
            {
                self.status[j] = VarStatus::AtUpper;
            }
            self.set_nonbasic_value(j);
        }
        for i in 0..m {
            if owner[i] == usize::MAX {
                owner[i] = n + i;
                self.status[n + i] = VarStatus::Basic;
            }
        }
        self.head = owner;
    }

    fn compute_basics(&mut self) {
        let mut r = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                self.scatter_column(j, &mut r, -self.x[j]);
            }
        }
        self.ftran(&mut r);
        for s in 0..self.m {
            self.x[self.head[s]] = r[s];
        }
    }

    fn violation(&self, j: usize) -> f64 {
        (self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j]).max(0.0)
    }

    fn primal_infeasibility(&self) -> f64 {
        self.head.iter().map(|&j| self.violation(j)).fold(0.0, f64::max)
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.head.iter().map(|&j| cost[j]).collect();
        self.btran(&mut y);
        y
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        cost[j] - self.dot_column(j, y)
    }

    fn is_dual_feasible(&self) -> bool {
        let y = self.duals(&self.cost);
        (0..self.n + self.m).all(|j| {
            if self.status[j] == VarStatus::Basic || self.lo[j] == self.hi[j] {
                return true;
            }
            let d = self.reduced_cost(j, &self.cost, &y);
            match self.status[j] {
                VarStatus::AtLower => d >= -OPT_TOL,
                VarStatus::AtUpper => d <= OPT_TOL,
                VarStatus::Free => d.abs() <= OPT_TOL,
                VarStatus::Basic => true,
            }
        })
    }

    fn tick(&mut self) -> Result<(), LpError> {
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(self.numerical("iteration limit reached"));
        }
        if self.updates >= REFACTOR_EVERY {
            self.refactor();
            self.compute_basics();
        }
        Ok(())
    }

    fn note_step(&mut self, t: f64) {
        if t.abs() <= 1e-12 {
            self.degenerate_run += 1;
            if self.degenerate_run > DEGENERATE_LIMIT && !self.bland {
                self.bland = true;
                self.log.push(format!(
                    "iteration {}: switching to Bland's rule",
                    self.iterations
                ));
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    /// Replaces the basic variable in slot `r` by `q`. `w` is the updated
    /// column of `q`, `dq` the change of `x_q`.
    fn pivot(&mut self, q: usize, r: usize, w: &[f64], dq: f64, leaving_to_upper: bool) {
        for s in 0..self.m {
            if w[s] != 0.0 {
                let j = self.head[s];
                self.x[j] -= w[s] * dq;
            }
        }
        self.x[q] += dq;
        let b = self.head[r];
        self.status[b] = if leaving_to_upper {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
        self.status[b] = sanitize(self.status[b], self.lo[b], self.hi[b]);
        self.set_nonbasic_value(b);
        self.status[q] = VarStatus::Basic;
        self.head[r] = q;
        self.push_eta(w, r);
        self.updates += 1;
    }

    // ---- primal simplex --------------------------------------------------

    fn run_primal(&mut self) -> Result<LpStatus, LpError> {
        let mut retries = 0;
        loop {
            self.tick()?;
            let phase1 = self.primal_infeasibility() > FEAS_TOL;
            match self.primal_step(phase1) {
                Step::Continue => {}
                Step::Done if phase1 => {
                    if self.primal_infeasibility() > FEAS_TOL {
                        return Ok(LpStatus::Infeasible);
                    }
                }
                Step::Done => return Ok(LpStatus::Optimal),
                Step::Unbounded => return Ok(LpStatus::Unbounded),
                Step::Infeasible => return Ok(LpStatus::Infeasible),
                Step::Retry => {
                    retries += 1;
                    if retries > 20 {
                        return Err(self.numerical("repeated numerical trouble in primal simplex"));
                    }
                    self.refactor();
                    self.compute_basics();
                }
            }
        }
    }

    fn primal_step(&mut self, phase1: bool) -> Step {
        let (n, m) = (self.n, self.m);
        let cost: Vec<f64> = if phase1 {
            let mut c = vec![0.0; n + m];
            for &j in &self.head {
                if self.x[j] < self.lo[j] - FEAS_TOL {
                    c[j] = -1.0;
                } else if self.x[j] > self.hi[j] + FEAS_TOL {
                    c[j] = 1.0;
                }
            }
            c
        } else {
            self.cost.clone()
        };
        let y = self.duals(&cost);

        // Pricing.
        let mut entering: Option<(usize, f64)> = None;
        let mut best = 0.0;
        for j in 0..n + m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, &cost, &y);
            let dir = match st {
                VarStatus::AtLower if d < -OPT_TOL => 1.0,
                VarStatus::AtUpper if d > OPT_TOL => -1.0,
                VarStatus::Free if d.abs() > OPT_TOL => -d.signum(),
                _ => continue,
            };
            if self.bland {
                entering = Some((j, dir));
                break;
            }
            if d.abs() > best {
                best = d.abs();
                entering = Some((j, dir));
            }
        }
        let Some((q, dir)) = entering else {
            return Step::Done;
        };

        let mut w = vec![0.0; m];
        self.scatter_column(q, &mut w, 1.0);
        self.ftran(&mut w);

        // Harris two-pass ratio test on basic variables moving at rate
        // `-dir * w[s]` per unit step of the entering variable.
        let limit_of = |s: usize, relax: f64| -> Option<(f64, bool)> {
            let rate = -dir * w[s];
            if rate.abs() <= PIVOT_TOL {
                return None;
            }
            let j = self.head[s];
            let (x, lo, hi) = (self.x[j], self.lo[j], self.hi[j]);
            if phase1 && x < lo - FEAS_TOL {
                return (rate > 0.0).then(|| ((lo - x + relax) / rate, false));
            }
            if phase1 && x > hi + FEAS_TOL {
                return (rate < 0.0).then(|| ((x - hi + relax) / -rate, true));
            }
            if rate < 0.0 {
                lo.is_finite()
                    .then(|| (((x - lo).max(0.0) + relax) / -rate, false))
            } else {
                hi.is_finite()
                    .then(|| (((hi - x).max(0.0) + relax) / rate, true))
            }
        };
        let mut t_relaxed = f64::INFINITY;
        for s in 0..m {
            if let Some((t, _)) = limit_of(s, FEAS_TOL) {
                t_relaxed = t_relaxed.min(t);
            }
        }
        let mut leave: Option<(usize, f64, bool)> = None;
        if t_relaxed.is_finite() {
            let mut best_w = -1.0;
            let mut best_idx = usize::MAX;
            for s in 0..m {
                if let Some((t, up)) = limit_of(s, 0.0) {
                    if t <= t_relaxed {
                        if self.bland {
                            if self.head[s] < best_idx {
                                best_idx = self.head[s];
                                leave = Some((s, t, up));
                            }
                        } else if w[s].abs() > best_w {
                            best_w = w[s].abs();
                            leave = Some((s, t, up));
                        }
                    }
                }
            }
        }
        let flip = self.hi[q] - self.lo[q];
        match leave {
            Some((_, t, _)) if flip.is_finite() && flip <= t => {
                self.bound_flip(q, dir, &w);
                self.note_step(flip);
                Step::Continue
            }
            Some((r, t, up)) => {
                let t = t.max(0.0);
                self.pivot(q, r, &w, dir * t, up);
                self.note_step(t);
                Step::Continue
            }
            None if flip.is_finite() => {
                self.bound_flip(q, dir, &w);
                self.note_step(flip);
                Step::Continue
            }
            None if phase1 => {
                self.log.push(format!(
                    "iteration {}: phase 1 found no blocking variable",
                    self.iterations
                ));
                Step::Retry
            }
            None => Step::Unbounded,
        }
    }

    fn bound_flip(&mut self, q: usize, dir: f64, w: &[f64]) {
        let dq = dir * (self.hi[q] - self.lo[q]);
        for s in 0..self.m {
            if w[s] != 0.0 {
                let j = self.head[s];
                self.x[j] -= w[s] * dq;
            }
        }
        self.status[q] = if dir > 0.0 {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
        self.set_nonbasic_value(q);
    }

    // ---- dual simplex ----------------------------------------------------

    fn run_dual(&mut self) -> Result<Step, LpError> {
        let mut retries = 0;
        loop {
            self.tick()?;
            match self.dual_step() {
                Step::Continue => {}
                Step::Retry => {
                    retries += 1;
                    if retries > 20 {
                        return Ok(Step::Retry);
                    }
                    self.refactor();
                    self.compute_basics();
                    if !self.is_dual_feasible() {
                        return Ok(Step::Retry);
                    }
                }
                other => return Ok(other),
            }
        }
    }

    fn dual_step(&mut self) -> Step {
        let (n, m) = (self.n, self.m);
        // Leaving row: largest bound violation.
        let mut leave: Option<usize> = None;
        let mut worst = FEAS_TOL;
        for s in 0..m {
            let v = self.violation(self.head[s]);
            if v > worst {
                if self.bland {
                    if leave.map_or(true, |r| self.head[s] < self.head[r]) {
                        leave = Some(s);
                    }
                } else {
                    worst = v;
                    leave = Some(s);
                }
            }
        }
        let Some(r) = leave else {
            return Step::Done;
        };
        let b = self.head[r];
        let increase = self.x[b] < self.lo[b];
        let target = if increase { self.lo[b] } else { self.hi[b] };

        let y = self.duals(&self.cost);
        let mut rho = vec![0.0; m];
        rho[r] = 1.0;
        self.btran(&mut rho);

        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for j in 0..n + m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let alpha = self.dot_column(j, &rho);
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let can_up = matches!(st, VarStatus::AtLower | VarStatus::Free);
            let can_down = matches!(st, VarStatus::AtUpper | VarStatus::Free);
            // x_b moves by -alpha per unit increase of x_j.
            let ok = if increase {
                (can_up && alpha < 0.0) || (can_down && alpha > 0.0)
            } else {
                (can_up && alpha > 0.0) || (can_down && alpha < 0.0)
            };
            if ok {
                let d = self.reduced_cost(j, &self.cost, &y);
                cands.push((j, alpha, d.abs()));
            }
        }
        if cands.is_empty() {
            return Step::Infeasible;
        }
        let t_relaxed = cands
            .iter()
            .map(|&(_, a, d)| (d + OPT_TOL) / a.abs())
            .fold(f64::INFINITY, f64::min);
        let mut chosen: Option<(usize, f64, f64)> = None;
        for &(j, a, d) in &cands {
            if d / a.abs() <= t_relaxed {
                let better = match chosen {
                    None => true,
                    Some((k, ak, _)) => {
                        if self.bland {
                            j < k
                        } else {
                            a.abs() > ak.abs()
                        }
                    }
                };
                if better {
                    chosen = Some((j, a, d));
                }
            }
        }
        let (q, alpha, d) = chosen.expect("candidate set is non-empty");

        let mut w = vec![0.0; m];
        self.scatter_column(q, &mut w, 1.0);
        self.ftran(&mut w);
        if (w[r] - alpha).abs() > 1e-7 * (1.0 + alpha.abs()) {
            self.log.push(format!(
                "iteration {}: pivot mismatch {} vs {}",
                self.iterations, w[r], alpha
            ));
            return Step::Retry;
        }
        let delta = target - self.x[b];
        let dq = -delta / w[r];
        self.pivot(q, r, &w, dq, !increase);
        self.note_step(d / alpha.abs());
        Step::Continue
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        if status == LpStatus::Optimal {
            // Snap nonbasic values and recompute basics once more.
            self.compute_basics();
        }
        let y = self.duals(&self.cost);
        let reduced_costs = (0..self.n)
            .map(|j| {
                if self.status[j] == VarStatus::Basic {
                    0.0
                } else {
                    self.reduced_cost(j, &self.cost, &y)
                }
            })
            .collect();
        let primal: Vec<f64> = self.x[..self.n].to_vec();
        let objective = self.lp.objective_value(&primal);
        let basis = Basis {
            vars: self.status[..self.n].to_vec(),
            rows: self.status[self.n..].to_vec(),
        };
        LpSolution {
            status,
            objective,
            primal,
            dual: y,
            reduced_costs,
            basis,
            iterations: self.iterations,
        }
    }
}

fn sanitize(st: VarStatus, lo: f64, hi: f64) -> VarStatus {
    match st {
        VarStatus::Basic => VarStatus::Basic,
        VarStatus::AtLower if lo.is_finite() => VarStatus::AtLower,
        VarStatus::AtUpper if hi.is_finite() => VarStatus::AtUpper,
        VarStatus::Free if !lo.is_finite() && !hi.is_finite() => VarStatus::Free,
        _ => default_status(lo, hi),
    }
}
