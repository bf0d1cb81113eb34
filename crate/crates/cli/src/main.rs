use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddrc::bnb::{trace_csv, TracePoint};
use ddrc::instance::{Instance, InstanceFile};
use ddrc::report::{bench_csv, BenchRow, Method, ResultRecord, RunStatus};
use ddrc::snip::{self, AMode};
use ddrc::sra::SraOptions;
use ddrc::{msp, oracle, sra, Error};
use rayon::prelude::*;
use serde::Serialize;

const EXIT_TIMEOUT: u8 = 3;
const EXIT_CAPACITY: u8 = 4;
const EXIT_INPUT: u8 = 5;
const EXIT_DISAGREE: u8 = 6;

#[derive(Parser)]
#[command(name = "ddrc", version, about = "Solve stochastic programs with decision-dependent random capacities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a grid interdiction instance file.
    Generate(GenerateArgs),
    /// Solve an instance file.
    Solve(SolveArgs),
    /// Run a grid of generated instances and write a CSV table.
    Bench(BenchArgs),
    /// Solve one instance with every applicable method and compare.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Sra,
    Msp,
    Oracle,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sra => Method::Sra,
            MethodArg::Msp => Method::Msp,
            MethodArg::Oracle => Method::Oracle,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    /// Interdiction budget.
    #[arg(long, default_value_t = 2)]
    budget: u32,
    /// Number of allocation levels.
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Make only this many randomly chosen arcs failable (explicit mode).
    #[arg(long)]
    sparse: Option<usize>,
    /// Also write the network in DOT format.
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SolveOpts {
    #[arg(long, value_enum, default_value = "sra")]
    method: MethodArg,
    /// Leaf gap threshold (default: 1e-6 relative to the root bound).
    #[arg(long)]
    eps: Option<f64>,
    /// Time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Desk-scale run: 60 s limit unless --time-limit is given.
    #[arg(long)]
    desk: bool,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    opts: SolveOpts,
    /// Write the result record here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the bound trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final partition tree (sra only).
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Square grid sides, e.g. 3,4.
    #[arg(long, value_delimiter = ',', default_values_t = [3])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2])]
    budgets: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [2])]
    levels: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = [MethodArg::Sra])]
    methods: Vec<MethodArg>,
    /// First seed; each cell runs five consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    desk: bool,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    /// Allowed absolute disagreement between methods.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|_| ExitCode::SUCCESS),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a).map(|_| ExitCode::SUCCESS),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Capacity { .. }) => EXIT_CAPACITY,
        Some(Error::Input(_) | Error::Json(_) | Error::Io(_)) => EXIT_INPUT,
        _ => 1,
    }
}

/// Full-scale limits by grid size, or a flat minute for desk runs.
fn default_time_limit(side: usize, desk: bool) -> Duration {
    let secs = match (desk, side) {
        (true, _) => 60,
        (false, 0..=3) => 1800,
        (false, 4) => 3600,
        _ => 7200,
    };
    Duration::from_secs(secs)
}

/// Single solves run unbounded unless asked otherwise.
fn time_limit(opts: &SolveOpts) -> Option<Duration> {
    match opts.time_limit {
        Some(s) => Some(Duration::from_secs_f64(s)),
        None if opts.desk => Some(default_time_limit(0, true)),
        None => None,
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let a_mode = match a.sparse {
        Some(k) => AMode::Explicit(snip::sparse_a_vector(a.rows, a.cols, k, a.seed)),
        None => AMode::Uniform,
    };
    let file = InstanceFile::grid(a.rows, a.cols, a.seed, a.budget, a.levels, a_mode.clone())?;
    file.save(&a.out)?;
    if let Some(dot) = a.dot {
        let grid = snip::generate_grid(a.rows, a.cols, a.seed, &a_mode, a.budget, a.levels)?;
        std::fs::write(&dot, grid.dot()).with_context(|| format!("writing {}", dot.display()))?;
    }
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<Instance> {
    let file = InstanceFile::load(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(file.build()?)
}

struct Outcome {
    record: ResultRecord,
    trace: Vec<TracePoint>,
    tree: Option<String>,
}

fn run_method(inst: &Instance, opts: &SolveOpts, limit: Option<Duration>) -> ddrc::Result<Outcome> {
    let name = inst.name.clone();
    Ok(match opts.method {
        MethodArg::Sra => {
            let r = sra::run(
                inst,
                &SraOptions {
                    eps: opts.eps,
                    time_limit: limit,
                    gap_tol: opts.gap_tol,
                },
            )?;
            Outcome {
                record: ResultRecord::from_sra(&name, &r),
                tree: Some(r.tree.snapshot()),
                trace: r.trace,
            }
        }
        MethodArg::Msp => {
            let r = msp::solve_msp(inst, limit, opts.gap_tol)?;
            Outcome {
                record: ResultRecord::from_msp(&name, &r),
                trace: r.trace,
                tree: None,
            }
        }
        MethodArg::Oracle => {
            let start = Instant::now();
            let r = oracle::brute_force_solve(inst)?;
            Outcome {
                record: ResultRecord::from_oracle(&name, &r, start.elapsed().as_secs_f64()),
                trace: Vec::new(),
                tree: None,
            }
        }
    })
}

fn solve(a: SolveArgs) -> anyhow::Result<ExitCode> {
    let inst = load(&a.instance)?;
    let out = run_method(&inst, &a.opts, time_limit(&a.opts))?;
    let text = serde_json::to_string_pretty(&out.record)?;
    match &a.out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    if let Some(p) = &a.trace {
        std::fs::write(p, trace_csv(&out.trace))?;
    }
    if let (Some(p), Some(tree)) = (&a.tree, &out.tree) {
        std::fs::write(p, tree)?;
    }
    Ok(match out.record.status {
        RunStatus::Optimal => ExitCode::SUCCESS,
        RunStatus::TimedOut => ExitCode::from(EXIT_TIMEOUT),
        _ => ExitCode::FAILURE,
    })
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    if a.sizes.iter().any(|&s| s < 2) {
        bail!("grid sides must be at least 2");
    }
    let mut jobs = Vec::new();
    for &side in &a.sizes {
        for &budget in &a.budgets {
            for &levels in &a.levels {
                for &method in &a.methods {
                    for seed in a.seed..a.seed + a.seeds {
                        jobs.push((side, budget, levels, method, seed));
                    }
                }
            }
        }
    }
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(side, budget, levels, method, seed)| {
            let opts = SolveOpts {
                method,
                eps: a.eps,
                time_limit: a.time_limit,
                desk: a.desk,
                gap_tol: a.gap_tol,
            };
            let limit = a
                .time_limit
                .map(Duration::from_secs_f64)
                .or(Some(default_time_limit(side, a.desk)));
            let start = Instant::now();
            let run = InstanceFile::grid(side, side, seed, budget, levels, AMode::Uniform)
                .and_then(|f| f.build())
                .and_then(|inst| run_method(&inst, &opts, limit));
            let mut row = BenchRow {
                rows: side,
                cols: side,
                budget,
                levels,
                seed,
                method: method.into(),
                value: None,
                gap: None,
                runtime_s: start.elapsed().as_secs_f64(),
                refinements: 0,
                solved: false,
                error: None,
            };
            match run {
                Ok(out) => {
                    let r = out.record;
                    row.value = r.value.is_finite().then_some(r.value);
                    row.gap = r.gap.is_finite().then_some(r.gap);
                    row.runtime_s = r.runtime_s;
                    row.refinements = r.refinements;
                    row.solved = r.solved();
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    std::fs::write(&a.out, bench_csv(&rows)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    records: Vec<ResultRecord>,
    skipped: Vec<(String, String)>,
    max_difference: f64,
    agree: bool,
}

fn verify(a: VerifyArgs) -> anyhow::Result<ExitCode> {
    let inst = load(&a.instance)?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for method in [MethodArg::Oracle, MethodArg::Sra, MethodArg::Msp] {
        let opts = SolveOpts {
            method,
            eps: a.eps,
            time_limit: None,
            desk: false,
            gap_tol: 1e-9,
        };
        match run_method(&inst, &opts, None) {
            Ok(out) => records.push(out.record),
            Err(e @ Error::Capacity { .. }) => skipped.push((Method::from(method).name().to_string(), e.to_string())),
            Err(e) => return Err(e.into()),
        }
    }
    let values: Vec<f64> = records.iter().map(|r| r.value).collect();
    let max_difference = values
        .iter()
        .flat_map(|a| values.iter().map(move |b| (a - b).abs()))
        .fold(0.0, f64::max);
    let agree = max_difference <= a.tol && records.len() >= 2;
    let report = VerifyReport {
        records,
        skipped,
        max_difference,
        agree,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if agree {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_DISAGREE)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_scale_with_grid_side() {
        assert_eq!(default_time_limit(3, false).as_secs(), 1800);
        assert_eq!(default_time_limit(4, false).as_secs(), 3600);
        assert_eq!(default_time_limit(6, false).as_secs(), 7200);
        assert_eq!(default_time_limit(6, true).as_secs(), 60);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
