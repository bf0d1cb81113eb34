//! JSON instance files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Instance, Recourse, StateProbabilityTable};
use crate::lp::{Relation, Row};
use crate::snip::{self, AMode, FlowArc, FlowNetwork};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub budget: u32,
    pub alloc_cost: Vec<Vec<f64>>,
    pub prob: ProbSpec,
    pub recourse: RecourseSpec,
    /// Optional explicit `[lo, hi]` range of the second-stage value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bounds: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    /// `p[i][kappa][level]`.
    Tensor(Vec<Vec<Vec<f64>>>),
    Formula(ProbFormula),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbFormula {
    Interdiction { a: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecourseSpec {
    Network(NetworkRecourse),
    Explicit(ExplicitRecourse),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkRecourse {
    GridMaxflow {
        rows: usize,
        cols: usize,
        seed: u64,
        a_mode: AMode,
    },
    NetworkMaxflow {
        nodes: usize,
        source: usize,
        sink: usize,
        arcs: Vec<FlowArc>,
        return_cap: f64,
        component_arcs: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl From<RowSense> for Relation {
    fn from(s: RowSense) -> Self {
        match s {
            RowSense::Le => Relation::Le,
            RowSense::Eq => Relation::Eq,
            RowSense::Ge => Relation::Ge,
        }
    }
}

/// `min q y` s.t. `W y (sense) r`, `y_cap(i) <= u_i * state_i`, `y >= 0`.
/// `W` is given as `(row, col, value)` triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitRecourse {
    pub q: Vec<f64>,
    #[serde(rename = "W")]
    pub w: Vec<(usize, usize, f64)>,
    pub r: Vec<f64>,
    /// Row senses; all equalities when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense: Option<Vec<RowSense>>,
    pub cap_var: Vec<usize>,
    pub u: Vec<f64>,
    #[serde(rename = "M")]
    pub m: Vec<f64>,
}

impl InstanceFile {
    /// Grid interdiction instance with zero allocation costs.
    pub fn grid(rows: usize, cols: usize, seed: u64, budget: u32, levels: usize, a_mode: AMode) -> Result<Self> {
        let grid = snip::generate_grid(rows, cols, seed, &a_mode, budget, levels)?;
        let a: Vec<f64> = grid.varying_arcs().iter().map(|&k| grid.a[k]).collect();
        let n = a.len();
        Ok(InstanceFile {
            name: Some(format!("grid{rows}x{cols}-b{budget}-L{levels}-s{seed}")),
            n,
            k: 1,
            l: levels,
            budget,
            alloc_cost: vec![vec![0.0; levels + 1]; n],
            prob: ProbSpec::Formula(ProbFormula::Interdiction { a }),
            recourse: RecourseSpec::Network(NetworkRecourse::GridMaxflow { rows, cols, seed, a_mode }),
            theta_bounds: None,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn build(&self) -> Result<Instance> {
        let table = match &self.prob {
            ProbSpec::Tensor(p) => {
                if p.len() != self.n {
                    return Err(Error::input(format!("prob has {} components, n = {}", p.len(), self.n)));
                }
                StateProbabilityTable::new(self.k, self.l, p)?
            }
            ProbSpec::Formula(ProbFormula::Interdiction { a }) => {
                if self.k != 1 {
                    return Err(Error::input("the interdiction formula needs K = 1"));
                }
                if a.len() != self.n {
                    return Err(Error::input(format!("a has {} entries, n = {}", a.len(), self.n)));
                }
                if a.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::input("a entries must be finite and nonnegative"));
                }
                StateProbabilityTable::from_fn(self.n, 1, self.l, |i, kappa, level| {
                    snip::interdiction_probability(a[i], kappa, level)
                })?
            }
        };
        let recourse = match &self.recourse {
            RecourseSpec::Network(NetworkRecourse::GridMaxflow { rows, cols, seed, a_mode }) => {
                let grid = snip::generate_grid(*rows, *cols, *seed, a_mode, self.budget, self.l)?;
                let comps = grid.varying_arcs();
                if comps.len() != self.n {
                    return Err(Error::input(format!(
                        "grid has {} failable arcs with a > 0, n = {}",
                        comps.len(),
                        self.n
                    )));
                }
                if let ProbSpec::Formula(ProbFormula::Interdiction { a }) = &self.prob {
                    let consistent = comps.iter().zip(a).all(|(&k, &v)| (grid.a[k] - v).abs() <= 1e-12);
                    if !consistent {
                        return Err(Error::input("prob.a disagrees with the grid's a_mode"));
                    }
                }
                let m = vec![1.0; comps.len()];
                Recourse::interdiction(grid.net, comps, m)?
            }
            RecourseSpec::Network(NetworkRecourse::NetworkMaxflow {
                nodes,
                source,
                sink,
                arcs,
                return_cap,
                component_arcs,
            }) => {
                let net = FlowNetwork {
                    nodes: *nodes,
                    source: *source,
                    sink: *sink,
                    arcs: arcs.clone(),
                    return_cap: *return_cap,
                };
                Recourse::interdiction(net, component_arcs.clone(), vec![1.0; component_arcs.len()])?
            }
            RecourseSpec::Explicit(e) => {
                let nrows = e.r.len();
                let sense = e.sense.clone().unwrap_or_else(|| vec![RowSense::Eq; nrows]);
                if sense.len() != nrows {
                    return Err(Error::input("sense and r lengths differ"));
                }
                let mut coeffs = vec![Vec::new(); nrows];
                for &(i, j, v) in &e.w {
                    if i >= nrows {
                        return Err(Error::input(format!("W entry references row {i}")));
                    }
                    coeffs[i].push((j, v));
                }
                let rows = coeffs
                    .into_iter()
                    .zip(&e.r)
                    .zip(sense)
                    .map(|((c, &r), s)| Row::new(c, s.into(), r))
                    .collect();
                Recourse::capacity(e.q.len(), e.q.clone(), rows, e.cap_var.clone(), e.u.clone(), e.m.clone())?
            }
        };
        let name = self.name.clone().unwrap_or_else(|| "instance".into());
        Instance::new(
            name,
            table,
            self.alloc_cost.clone(),
            self.budget,
            recourse,
            self.theta_bounds.map(|[lo, hi]| (lo, hi)),
        )
    }
}
