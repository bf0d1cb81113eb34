use crate::lp::{LinearProgram, LpSolution, LpStatus, Relation, Row};
use crate::snip::{self, FlowNetwork};
use crate::{Error, Result};

/// Row of a [`StateLp`]: `coeffs . y  (relation)  rhs + sum_i g_i * state_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateRow {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub state_coeffs: Vec<(usize, f64)>,
}

impl StateRow {
    pub fn rhs_at(&self, state: &[f64]) -> f64 {
        self.rhs + self.state_coeffs.iter().map(|&(i, g)| g * state[i]).sum::<f64>()
    }
}

/// Minimization LP whose right-hand side is affine in the component state
/// vector. Its optimal value is convex in the state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateLp {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<StateRow>,
}

impl StateLp {
    pub fn push_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn instantiate(&self, state: &[f64]) -> Result<LinearProgram> {
        let mut lp = LinearProgram::new();
        for j in 0..self.num_vars() {
            lp.add_var(self.cost[j], self.lower[j], self.upper[j]);
        }
        for row in &self.rows {
            lp.add_row(Row::new(row.coeffs.clone(), row.relation, row.rhs_at(state)))?;
        }
        Ok(lp)
    }

    pub fn solve(&self, state: &[f64]) -> Result<LpSolution> {
        let sol = self.instantiate(state)?.solve(None)?;
        match sol.status {
            LpStatus::Optimal => Ok(sol),
            s => Err(Error::Model(format!("second-stage LP is {s:?} at state {state:?}"))),
        }
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.solve(state)?.objective)
    }
}

/// The concave companion evaluator, exact on integral states.
#[derive(Clone, Debug, PartialEq)]
pub enum UpperForm {
    /// `min q y + sum_i M_i (1 - state_i) y_cap(i)` over the template
    /// without capacity rows and with `y_cap(i) <= u_i`. Exact for binary
    /// states only.
    Penalty {
        base: StateLp,
        cap_var: Vec<usize>,
        u: Vec<f64>,
        m: Vec<f64>,
    },
    /// Max flow with arc `component_arcs[i]` scaled by `1 - state_i`.
    MaxFlow {
        net: FlowNetwork,
        component_arcs: Vec<usize>,
    },
}

/// Second-stage model: a convex lower evaluator given as a [`StateLp`] and
/// a concave upper evaluator. Both agree on integral states.
#[derive(Clone, Debug, PartialEq)]
pub struct Recourse {
    lower: StateLp,
    upper: UpperForm,
    components: usize,
}

impl Recourse {
    /// Capacity-form recourse: `min q y` subject to `rows` and the
    /// capacity rows `y_cap(i) <= u_i * state_i`, with `y >= 0`. `m[i]`
    /// bounds the multiplier of capacity row `i`.
    pub fn capacity(
        n_vars: usize,
        q: Vec<f64>,
        rows: Vec<Row>,
        cap_var: Vec<usize>,
        u: Vec<f64>,
        m: Vec<f64>,
    ) -> Result<Self> {
        let n = cap_var.len();
        if q.len() != n_vars || u.len() != n || m.len() != n {
            return Err(Error::input("recourse dimensions do not agree"));
        }
        if u.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::input("capacities u must be positive"));
        }
        if m.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::input("penalty bounds M must be nonnegative"));
        }
        let mut seen = vec![false; n_vars];
        for &j in &cap_var {
            if j >= n_vars || std::mem::replace(&mut seen[j], true) {
                return Err(Error::input(format!("capacity variable {j} invalid or repeated")));
            }
        }
        let mut base = StateLp::default();
        for &c in &q {
            if !c.is_finite() {
                return Err(Error::input("recourse costs must be finite"));
            }
            base.push_var(c, 0.0, f64::INFINITY);
        }
        for row in rows {
            if row.coeffs.iter().any(|&(j, _)| j >= n_vars) {
                return Err(Error::input("recourse row references an unknown variable"));
            }
            base.rows.push(StateRow {
                coeffs: row.coeffs,
                relation: row.relation,
                rhs: row.rhs,
                state_coeffs: Vec::new(),
            });
        }
        let mut lower = base.clone();
        for (i, &j) in cap_var.iter().enumerate() {
            lower.rows.push(StateRow {
                coeffs: vec![(j, 1.0)],
                relation: Relation::Le,
                rhs: 0.0,
                state_coeffs: vec![(i, u[i])],
            });
        }
        Ok(Recourse {
            lower,
            upper: UpperForm::Penalty { base, cap_var, u, m },
            components: n,
        })
    }

    /// Interdiction recourse on `net`: component `i` is the failure state
    /// of arc `component_arcs[i]`. Penalties `m` must be at least 1 for the
    /// two evaluators to agree on integral states.
    pub fn interdiction(net: FlowNetwork, component_arcs: Vec<usize>, m: Vec<f64>) -> Result<Self> {
        net.validate()?;
        if m.len() != component_arcs.len() {
            return Err(Error::input("one penalty per component is required"));
        }
        let mut seen = vec![false; net.arcs.len()];
        for &k in &component_arcs {
            if k >= net.arcs.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::input(format!("component arc {k} invalid or repeated")));
            }
        }
        let lower = snip::build_snip_recourse(&net, &component_arcs, &m);
        Ok(Recourse {
            lower,
            components: component_arcs.len(),
            upper: UpperForm::MaxFlow { net, component_arcs },
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn lower(&self) -> &StateLp {
        &self.lower
    }

    pub fn upper(&self) -> &UpperForm {
        &self.upper
    }

    pub fn network(&self) -> Option<(&FlowNetwork, &[usize])> {
        match &self.upper {
            UpperForm::MaxFlow { net, component_arcs } => Some((net, component_arcs)),
            UpperForm::Penalty { .. } => None,
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.components {
            return Err(Error::input(format!(
                "state has {} entries, recourse has {} components",
                state.len(),
                self.components
            )));
        }
        if state.iter().any(|s| !s.is_finite() || *s < -1e-12) {
            return Err(Error::input("states must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Convex evaluator.
    pub fn lower_value(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        self.lower.value(state)
    }

    /// Concave evaluator.
    pub fn upper_value(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        match &self.upper {
            UpperForm::MaxFlow { net, component_arcs } => {
                if state.iter().any(|&s| s > 1.0 + 1e-12) {
                    return Err(Error::input("interdiction states lie in [0, 1]"));
                }
                Ok(snip::max_flow(net, &availability(net, component_arcs, state)))
            }
            UpperForm::Penalty { base, cap_var, u, m } => {
                if state.iter().any(|&s| s > 1.0 + 1e-12) {
                    return Err(Error::input(
                        "the penalized evaluator needs states in [0, 1] (K = 1)",
                    ));
                }
                let mut lp = base.instantiate(state)?;
                for (i, &j) in cap_var.iter().enumerate() {
                    lp.set_cost(j, lp.cost()[j] + m[i] * (1.0 - state[i]));
                    lp.set_bounds(j, 0.0, u[i])?;
                }
                let sol = lp.solve(None)?;
                match sol.status {
                    LpStatus::Optimal => Ok(sol.objective),
                    s => Err(Error::Model(format!("penalized LP is {s:?} at state {state:?}"))),
                }
            }
        }
    }

    /// Second-stage value at an integral state.
    pub fn scenario_value(&self, state: &[usize]) -> Result<f64> {
        let xi: Vec<f64> = state.iter().map(|&s| s as f64).collect();
        match &self.upper {
            UpperForm::MaxFlow { .. } => self.upper_value(&xi),
            UpperForm::Penalty { .. } => self.lower_value(&xi),
        }
    }
}

/// Arc availability `1 - state` on component arcs and 1 elsewhere.
pub(crate) fn availability(net: &FlowNetwork, component_arcs: &[usize], state: &[f64]) -> Vec<f64> {
    let mut avail = vec![1.0; net.arcs.len()];
    for (i, &k) in component_arcs.iter().enumerate() {
        avail[k] = (1.0 - state[i]).max(0.0);
    }
    avail
}
