//! Linear programming core.
//!
//! Programs are always minimizations over variables with (possibly
//! infinite) bounds and sparse rows. Rows and columns can be appended after
//! a solve; the returned [`Basis`] then remains a valid warm start and the
//! dual simplex repairs primal feasibility.

mod mps;
mod simplex;

use std::fmt;

use thiserror::Error;

pub use mps::write_mps;

/// Primal feasibility tolerance (absolute).
pub const FEAS_TOL: f64 = 1e-7;
/// Dual feasibility / optimality tolerance (absolute).
pub const OPT_TOL: f64 = 1e-7;
/// Smallest pivot magnitude accepted by the ratio tests.
pub const PIVOT_TOL: f64 = 1e-9;
/// Number of basis updates between refactorizations.
pub const REFACTOR_EVERY: usize = 100;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("row references unknown variable {var} (program has {num_vars})")]
    UnknownVariable { var: usize, num_vars: usize },
    #[error("variable {var} has lower bound {lo} above upper bound {hi}")]
    BadBounds { var: usize, lo: f64, hi: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("simplex failed after {iterations} iterations: {message}")]
    Numerical {
        message: String,
        iterations: usize,
        log: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Row {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row::new(coeffs, Relation::Eq, rhs)
    }

    /// Activity of the row's left-hand side at `x`.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimization LP: `min c^T x` subject to sparse rows and variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Column-major copy of the row entries: `(row, coefficient)`.
    columns: Vec<Vec<(usize, f64)>>,
    rows: Vec<Row>,
    names: Vec<Option<String>>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        assert!(cost.is_finite(), "objective coefficient must be finite");
        assert!(
            lower <= upper && lower < f64::INFINITY && upper > f64::NEG_INFINITY,
            "bad bounds [{lower}, {upper}]"
        );
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.columns.push(Vec::new());
        self.names.push(None);
        self.cost.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        let j = self.add_var(cost, lower, upper);
        self.names[j] = Some(name.into());
        j
    }

    pub fn var_name(&self, j: usize) -> String {
        self.names[j].clone().unwrap_or_else(|| format!("x{j}"))
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.cost[j] = c;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) -> Result<(), LpError> {
        if !(lo <= hi) {
            return Err(LpError::BadBounds { var: j, lo, hi });
        }
        self.lower[j] = lo;
        self.upper[j] = hi;
        Ok(())
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Row {
        &self.rows[i]
    }

    pub(crate) fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    /// Appends a row. Duplicate variable entries are summed and explicit
    /// zeros are dropped.
    pub fn add_row(&mut self, row: Row) -> Result<usize, LpError> {
        if !row.rhs.is_finite() {
            return Err(LpError::NonFinite("row right-hand side"));
        }
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(row.coeffs.len());
        let mut sorted = row.coeffs;
        sorted.sort_by_key(|&(j, _)| j);
        for (j, a) in sorted {
            if j >= self.num_vars() {
                return Err(LpError::UnknownVariable {
                    var: j,
                    num_vars: self.num_vars(),
                });
            }
            if !a.is_finite() {
                return Err(LpError::NonFinite("row coefficient"));
            }
            match coeffs.last_mut() {
                Some((k, b)) if *k == j => *b += a,
                _ => coeffs.push((j, a)),
            }
        }
        coeffs.retain(|&(_, a)| a != 0.0);
        let i = self.rows.len();
        for &(j, a) in &coeffs {
            self.columns[j].push((i, a));
        }
        self.rows.push(Row {
            coeffs,
            relation: row.relation,
            rhs: row.rhs,
        });
        Ok(i)
    }

    /// Appends several rows, returning the index range they occupy. Either
    /// all rows are added or none.
    pub fn add_rows(&mut self, rows: Vec<Row>) -> Result<std::ops::Range<usize>, LpError> {
        let n = self.num_vars();
        for row in &rows {
            if let Some(&(var, _)) = row.coeffs.iter().find(|&&(j, _)| j >= n) {
                return Err(LpError::UnknownVariable { var, num_vars: n });
            }
        }
        let start = self.rows.len();
        for row in rows {
            self.add_row(row)?;
        }
        Ok(start..self.rows.len())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = (0..self.num_vars())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        self.rows
            .iter()
            .map(|r| r.violation(x))
            .fold(bounds, f64::max)
    }

    pub fn solve(&self, warm: Option<&Basis>) -> Result<LpSolution, LpError> {
        self.solve_with(&SolveOptions {
            warm,
            ..SolveOptions::default()
        })
    }

    pub fn solve_with(&self, opts: &SolveOptions<'_>) -> Result<LpSolution, LpError> {
        simplex::solve(self, opts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Simplex basis: one status per structural variable and per row (the
/// row's logical variable).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub vars: Vec<VarStatus>,
    pub rows: Vec<VarStatus>,
}

impl Basis {
    /// All-logical starting basis.
    pub fn slack(lp: &LinearProgram) -> Self {
        let mut b = Basis {
            vars: Vec::new(),
            rows: Vec::new(),
        };
        b.extend_to(lp);
        b
    }

    /// Grows the basis after variables or rows were appended to `lp`: new
    /// columns enter nonbasic at a finite bound, new rows enter with their
    /// logical basic. The result is dual feasible whenever the old basis was
    /// optimal and the new columns price out.
    pub fn extend_to(&mut self, lp: &LinearProgram) {
        for j in self.vars.len()..lp.num_vars() {
            let (lo, hi) = lp.bounds(j);
            self.vars.push(default_status(lo, hi));
        }
        self.rows.resize(lp.num_rows(), VarStatus::Basic);
    }

    pub fn num_basic(&self) -> usize {
        self.vars
            .iter()
            .chain(self.rows.iter())
            .filter(|s| **s == VarStatus::Basic)
            .count()
    }
}

pub(crate) fn default_status(lo: f64, hi: f64) -> VarStatus {
    if lo.is_finite() {
        VarStatus::AtLower
    } else if hi.is_finite() {
        VarStatus::AtUpper
    } else {
        VarStatus::Free
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions<'a> {
    pub warm: Option<&'a Basis>,
    /// Temporary bound replacements `(var, lo, hi)` applied for this solve
    /// only (used by branch-and-bound).
    pub bound_overrides: &'a [(usize, f64, f64)],
    /// Iteration cap; `0` means automatic.
    pub max_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One multiplier per row; `d = c - A^T y`.
    pub dual: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Basis,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
