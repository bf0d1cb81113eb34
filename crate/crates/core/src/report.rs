//! Result records shared by the solvers and the command line.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::bnb::BnbStatus;
use crate::msp::MspResult;
use crate::oracle::OracleResult;
use crate::sra::SraResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sra,
    Msp,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sra => "sra",
            Method::Msp => "msp",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    TimedOut,
    Infeasible,
    Unbounded,
}

impl From<BnbStatus> for RunStatus {
    fn from(s: BnbStatus) -> Self {
        match s {
            BnbStatus::Optimal => RunStatus::Optimal,
            BnbStatus::TimedOut => RunStatus::TimedOut,
            BnbStatus::Infeasible => RunStatus::Infeasible,
            BnbStatus::Unbounded => RunStatus::Unbounded,
        }
    }
}

/// One solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance: String,
    pub method: Method,
    pub status: RunStatus,
    pub allocation: Option<Vec<usize>>,
    pub value: f64,
    pub bound: f64,
    pub gap: f64,
    pub refinements: usize,
    pub leaves: usize,
    pub nodes: usize,
    pub runtime_s: f64,
}

impl ResultRecord {
    pub fn solved(&self) -> bool {
        self.status == RunStatus::Optimal
    }

    pub fn from_sra(instance: &str, r: &SraResult) -> Self {
        ResultRecord {
            instance: instance.into(),
            method: Method::Sra,
            status: r.status.into(),
            allocation: r.x.as_ref().map(|x| x.levels().to_vec()),
            value: r.objective,
            bound: r.bound,
            gap: r.gap(),
            refinements: r.refinements,
            leaves: r.tree.num_leaves(),
            nodes: r.nodes,
            runtime_s: r.runtime_s,
        }
    }

    pub fn from_msp(instance: &str, r: &MspResult) -> Self {
        ResultRecord {
            instance: instance.into(),
            method: Method::Msp,
            status: r.status.into(),
            allocation: r.x.as_ref().map(|x| x.levels().to_vec()),
            value: r.objective,
            bound: r.bound,
            gap: r.gap(),
            refinements: 0,
            leaves: r.scenarios,
            nodes: r.nodes,
            runtime_s: r.runtime_s,
        }
    }

    pub fn from_oracle(instance: &str, r: &OracleResult, runtime_s: f64) -> Self {
        ResultRecord {
            instance: instance.into(),
            method: Method::Oracle,
            status: RunStatus::Optimal,
            allocation: Some(r.x.levels().to_vec()),
            value: r.value,
            bound: r.value,
            gap: 0.0,
            refinements: 0,
            leaves: 0,
            nodes: r.table.len(),
            runtime_s,
        }
    }
}

/// Row of a benchmark table.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub rows: usize,
    pub cols: usize,
    pub budget: u32,
    pub levels: usize,
    pub seed: u64,
    pub method: Method,
    pub value: Option<f64>,
    pub gap: Option<f64>,
    pub runtime_s: f64,
    pub refinements: usize,
    pub solved: bool,
    pub error: Option<String>,
}

pub const BENCH_HEADER: &str = "grid,budget,levels,seed,method,value,gap,runtime_s,refinements,solved,error";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.9}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{}x{},{},{},{},{},{},{},{:.3},{},{},{}",
            r.rows,
            r.cols,
            r.budget,
            r.levels,
            r.seed,
            r.method.name(),
            opt(r.value),
            opt(r.gap),
            r.runtime_s,
            r.refinements,
            r.solved,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out
}
