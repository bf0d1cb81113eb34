//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::time::{Duration, Instant};

use ddrc::bnb::{self, BnbOptions, BnbStatus};
use ddrc::bounds::{penalized_value, recourse_value, tree_bounds};
use ddrc::instance::InstanceFile;
use ddrc::linearize::{chain_multilinear, BinaryExpr};
use ddrc::lp::{LinearProgram, Row, SolveOptions};
use ddrc::oracle::{brute_force_solve, exact_objective, feasible_allocations};
use ddrc::snip::{self, AMode};
use ddrc::sra::{self, SraOptions};
use ddrc::{msp, AllocationVector, Instance, PartitionTree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: ddrc::Error) -> String {
    e.to_string()
}

/// 30 small grids: sides 3 and 4, one or two levels, budget 1 or 2, and
/// three to six failable arcs.
fn small_instances() -> Vec<Instance> {
    (0..30u64)
        .map(|i| {
            let side = 3 + (i % 2) as usize;
            let levels = 1 + ((i / 2) % 2) as usize;
            let budget = 1 + ((i / 4) % 2) as u32;
            let arcs = 3 + (i % 4) as usize;
            let a = snip::sparse_a_vector(side, side, arcs, 100 + i);
            InstanceFile::grid(side, side, 100 + i, budget, levels, AMode::Explicit(a))
                .and_then(|f| f.build())
                .expect("grid instance")
        })
        .collect()
}

fn oracle_agreement(insts: &[Instance]) -> Check {
    let mut worst = 0.0f64;
    for (idx, inst) in insts.iter().enumerate() {
        let o = brute_force_solve(inst).map_err(err)?.value;
        let opts = SraOptions {
            gap_tol: 1e-9,
            ..SraOptions::default()
        };
        let s = sra::run(inst, &opts).map_err(err)?;
        let m = msp::solve_msp(inst, None, 1e-9).map_err(err)?;
        ensure(s.status == BnbStatus::Optimal && m.status == BnbStatus::Optimal, || {
            format!("instance {idx}: sra {:?}, msp {:?}", s.status, m.status)
        })?;
        let d = (s.objective - o).abs().max((m.objective - o).abs());
        ensure(d <= 1e-6, || format!("instance {idx}: oracle {o}, sra {}, msp {}", s.objective, m.objective))?;
        worst = worst.max(d);
    }
    Ok(format!("{} instances, max difference {worst:.2e}", insts.len()))
}

fn random_allocations(insts: &[Instance], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, AllocationVector)>, String> {
    let pools: Vec<Vec<AllocationVector>> = insts
        .iter()
        .map(|inst| feasible_allocations(inst, 1 << 20).map_err(err))
        .collect::<Result<_, _>>()?;
    Ok((0..count)
        .map(|_| {
            let i = rng.gen_range(0..insts.len());
            (i, pools[i].choose(rng).unwrap().clone())
        })
        .collect())
}

fn jensen_sandwich(insts: &[Instance], rng: &mut ChaCha8Rng) -> Check {
    for (i, x) in random_allocations(insts, 200, rng)? {
        let inst = &insts[i];
        let mean = inst.expected_state(&x, &[]).map_err(err)?;
        let lo = recourse_value(inst, &mean).map_err(err)?;
        let hi = penalized_value(inst, &mean).map_err(err)?;
        let e = exact_objective(inst, &x).map_err(err)? - inst.first_stage_cost(&x);
        ensure(lo <= e + 1e-9 && e <= hi + 1e-9, || format!("instance {i} {x:?}: {lo} <= {e} <= {hi} fails"))?;
    }
    Ok("200 allocations".into())
}

fn refinement_monotonicity(insts: &[Instance], rng: &mut ChaCha8Rng) -> Check {
    let mut refinements = 0;
    for (i, x) in random_allocations(insts, 100, rng)? {
        let inst = &insts[i];
        let exact = exact_objective(inst, &x).map_err(err)? - inst.first_stage_cost(&x);
        let mut tree = PartitionTree::new(inst.k());
        let mut prev = tree_bounds(inst, &tree, &x).map_err(err)?;
        loop {
            let open: Vec<(usize, usize)> = tree
                .leaves()
                .flat_map(|leaf| {
                    let node = tree.node(leaf);
                    inst.varying().iter().filter(|&&c| !node.fixes(c)).map(move |&c| (leaf, c))
                })
                .collect();
            let Some(&(leaf, comp)) = open.choose(rng) else { break };
            tree.refine(leaf, comp).map_err(err)?;
            refinements += 1;
            let b = tree_bounds(inst, &tree, &x).map_err(err)?;
            ensure(b.lower >= prev.lower - 1e-9 && b.upper <= prev.upper + 1e-9, || {
                format!("instance {i}: [{}, {}] -> [{}, {}]", prev.lower, prev.upper, b.lower, b.upper)
            })?;
            prev = b;
        }
        ensure((prev.lower - exact).abs() <= 1e-9 && (prev.upper - exact).abs() <= 1e-9, || {
            format!("instance {i}: full tree [{}, {}] vs {exact}", prev.lower, prev.upper)
        })?;
    }
    Ok(format!("100 sequences, {refinements} refinements"))
}

fn replay_chain(insts: &[Instance]) -> Check {
    let mut steps = 0;
    for (idx, inst) in insts.iter().enumerate() {
        let z = brute_force_solve(inst).map_err(err)?.value;
        let opts = SraOptions {
            gap_tol: 1e-9,
            ..SraOptions::default()
        };
        let r = sra::run(inst, &opts).map_err(err)?;
        let optima = sra::replay_optima(inst, &r.refinement_log, 1e-9).map_err(err)?;
        for w in optima.windows(2) {
            ensure(w[1] >= w[0] - 1e-7, || format!("instance {idx}: {} then {}", w[0], w[1]))?;
        }
        ensure(optima.iter().all(|&v| v <= z + 1e-7), || format!("instance {idx}: {optima:?} exceeds {z}"))?;
        steps += optima.len();
    }
    Ok(format!("{} instances, {steps} model optima", insts.len()))
}

fn penalized_gate(rng: &mut ChaCha8Rng) -> Check {
    let grids: Vec<Instance> = (3..=5)
        .flat_map(|side| (0..3u64).map(move |seed| (side, seed)))
        .map(|(side, seed)| {
            InstanceFile::grid(side, side, seed, 2, 2, AMode::Uniform)
                .and_then(|f| f.build())
                .map_err(err)
        })
        .collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let inst = grids.choose(rng).unwrap();
        let xi: Vec<f64> = (0..inst.n()).map(|_| rng.gen_range(0..=inst.k()) as f64).collect();
        let a = recourse_value(inst, &xi).map_err(err)?;
        let b = penalized_value(inst, &xi).map_err(err)?;
        worst = worst.max((a - b).abs());
        ensure((a - b).abs() <= 1e-8, || format!("{a} vs {b} at {xi:?}"))?;
    }
    for _ in 0..500 {
        let inst = grids.choose(rng).unwrap();
        let k = inst.k() as f64;
        let p: Vec<f64> = (0..inst.n()).map(|_| rng.gen_range(0.0..=k)).collect();
        let q: Vec<f64> = (0..inst.n()).map(|_| rng.gen_range(0.0..=k)).collect();
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fp, fq, fm) = (
            penalized_value(inst, &p).map_err(err)?,
            penalized_value(inst, &q).map_err(err)?,
            penalized_value(inst, &mid).map_err(err)?,
        );
        ensure(fm >= 0.5 * (fp + fq) - 1e-8, || format!("midpoint {fm} below {}", 0.5 * (fp + fq)))?;
    }
    Ok(format!("500 equality pairs (max difference {worst:.1e}), 500 midpoint pairs"))
}

fn arc_counts() -> Check {
    let expected = [30, 56, 90, 132, 182, 240];
    let got: Vec<usize> = (3..=8)
        .map(|side| snip::generate_grid(side, side, 1, &AMode::Uniform, 2, 2).map(|g| g.arc_count()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    ensure(got == expected, || format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn mccormick_exactness(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let mut lp = LinearProgram::new();
        let nx = rng.gen_range(1..=6);
        let x: Vec<usize> = (0..nx).map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
        let lo = rng.gen_range(-5.0..5.0);
        let hi = lo + rng.gen_range(0.0..10.0);
        let t = lp.add_var(0.0, lo, hi);
        let factors: Vec<BinaryExpr> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let mut terms: Vec<(usize, f64)> = x.iter().map(|&j| (j, rng.gen_range(-1.0..1.0))).collect();
                terms.retain(|_| rng.gen_bool(0.6));
                BinaryExpr {
                    constant: rng.gen_range(-1.0..1.0),
                    terms,
                }
            })
            .collect();
        let chain = chain_multilinear(&mut lp, &factors, t, (lo, hi)).map_err(err)?;
        lp.set_cost(chain.output, if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        let point: Vec<f64> = x.iter().map(|_| f64::from(rng.gen_range(0..=1u8))).collect();
        let tv = rng.gen_range(lo..=hi);
        let mut fix: Vec<(usize, f64, f64)> = x.iter().zip(&point).map(|(&j, &v)| (j, v, v)).collect();
        fix.push((t, tv, tv));
        let sol = lp
            .solve_with(&SolveOptions {
                bound_overrides: &fix,
                ..Default::default()
            })
            .map_err(|e| e.to_string())?;
        ensure(sol.is_optimal(), || format!("status {:?}", sol.status))?;
        let mut assignment = vec![0.0; lp.num_vars()];
        for (&j, &v) in x.iter().zip(&point) {
            assignment[j] = v;
        }
        let direct = factors.iter().map(|f| f.eval(&assignment)).product::<f64>() * tv;
        let d = (sol.primal[chain.output] - direct).abs();
        worst = worst.max(d);
        ensure(d <= 1e-9, || format!("chain {} vs product {direct}", sol.primal[chain.output]))?;
    }
    Ok(format!("500 points, max difference {worst:.1e}"))
}

fn desk_cell() -> Check {
    let mut refinements = Vec::new();
    for seed in 1..=5u64 {
        let inst = InstanceFile::grid(3, 3, seed, 2, 2, AMode::Uniform)
            .and_then(|f| f.build())
            .map_err(err)?;
        let opts = SraOptions {
            time_limit: Some(Duration::from_secs(60)),
            ..SraOptions::default()
        };
        let r = sra::run(&inst, &opts).map_err(err)?;
        ensure(r.status == BnbStatus::Optimal, || format!("seed {seed}: {:?}", r.status))?;
        ensure(r.refinements <= 100, || format!("seed {seed}: {} refinements", r.refinements))?;
        refinements.push(r.refinements);
    }
    let mean = refinements.iter().sum::<usize>() as f64 / refinements.len() as f64;
    Ok(format!("solved 5/5, refinements {refinements:?}, mean {mean:.1}"))
}

/// Feasible at the origin: `<=` rows have nonnegative right-hand sides and
/// `>=` rows nonpositive ones. Every variable is bounded.
fn random_mip(rng: &mut ChaCha8Rng) -> (LinearProgram, Vec<usize>) {
    let mut lp = LinearProgram::new();
    let nb = rng.gen_range(1..=12);
    let nc = rng.gen_range(0..=4);
    let binaries: Vec<usize> = (0..nb).map(|_| lp.add_var(rng.gen_range(-10.0..10.0), 0.0, 1.0)).collect();
    for _ in 0..nc {
        lp.add_var(rng.gen_range(-5.0..5.0), 0.0, rng.gen_range(1.0..4.0));
    }
    let n = nb + nc;
    for _ in 0..rng.gen_range(1..=6) {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-5.0..5.0)));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let rhs = rng.gen_range(0.0..8.0);
        let row = if rng.gen_bool(0.7) {
            Row::le(coeffs, rhs)
        } else {
            Row::ge(coeffs, -rhs)
        };
        lp.add_row(row).expect("valid row");
    }
    (lp, binaries)
}

fn enumerate(lp: &LinearProgram, binaries: &[usize]) -> Result<f64, String> {
    let mut best = f64::INFINITY;
    for mask in 0..1u32 << binaries.len() {
        let fix: Vec<(usize, f64, f64)> = binaries
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let v = f64::from((mask >> k) & 1);
                (j, v, v)
            })
            .collect();
        let sol = lp
            .solve_with(&SolveOptions {
                bound_overrides: &fix,
                ..Default::default()
            })
            .map_err(|e| e.to_string())?;
        if sol.is_optimal() {
            best = best.min(sol.objective);
        }
    }
    Ok(best)
}

fn engine_sanity(rng: &mut ChaCha8Rng) -> Check {
    let opts = BnbOptions {
        gap_tol: 1e-12,
        ..BnbOptions::default()
    };
    let mut nodes = 0;
    for idx in 0..200 {
        let (lp, binaries) = random_mip(rng);
        let expected = enumerate(&lp, &binaries)?;
        let r = bnb::solve_mip(&mut lp.clone(), &binaries, &opts).map_err(err)?;
        ensure(r.status == BnbStatus::Optimal, || format!("mip {idx}: {:?}", r.status))?;
        ensure((r.objective - expected).abs() <= 1e-7, || format!("mip {idx}: {} vs {expected}", r.objective))?;
        nodes += r.nodes;
    }
    Ok(format!("200 programs, {nodes} nodes"))
}

fn main() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let insts = small_instances();
    let checks: Vec<(&str, Box<dyn FnOnce(&mut ChaCha8Rng) -> Check + '_>)> = vec![
        ("1 oracle agreement", Box::new(|_| oracle_agreement(&insts))),
        ("2 mean-value sandwich", Box::new(|r| jensen_sandwich(&insts, r))),
        ("3 refinement monotonicity", Box::new(|r| refinement_monotonicity(&insts, r))),
        ("4 model optima chain", Box::new(|_| replay_chain(&insts))),
        ("5 penalized recourse gate", Box::new(penalized_gate)),
        ("6 grid arc counts", Box::new(|_| arc_counts())),
        ("7 mccormick exactness", Box::new(mccormick_exactness)),
        ("8 desk-scale uniform cell", Box::new(|_| desk_cell())),
        ("9 engine sanity", Box::new(engine_sanity)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let outcome = check(&mut rng);
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("{} of 9 passed in {:.1}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
