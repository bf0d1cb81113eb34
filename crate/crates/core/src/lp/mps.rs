use std::fmt::Write;

use super::{LinearProgram, Relation};

/// Renders `lp` in free-format MPS. Variables listed in `integers` are
/// wrapped in `MARKER INTORG/INTEND` blocks.
pub fn write_mps(lp: &LinearProgram, name: &str, integers: &[usize]) -> String {
    let mut is_int = vec![false; lp.num_vars()];
    for &j in integers {
        is_int[j] = true;
    }
    let mut out = String::new();
    let _ = writeln!(out, "NAME {name}");
    out.push_str("ROWS\n N obj\n");
    for (i, row) in lp.rows().iter().enumerate() {
        let tag = match row.relation {
            Relation::Le => 'L',
            Relation::Ge => 'G',
            Relation::Eq => 'E',
        };
        let _ = writeln!(out, " {tag} r{i}");
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for j in 0..lp.num_vars() {
        if is_int[j] != in_int {
            let marker = if is_int[j] { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, " MARKER 'MARKER' '{marker}'");
            in_int = is_int[j];
        }
        let name = lp.var_name(j);
        let c = lp.cost()[j];
        if c != 0.0 {
            let _ = writeln!(out, " {name} obj {c}");
        }
        for &(i, a) in lp.column(j) {
            let _ = writeln!(out, " {name} r{i} {a}");
        }
    }
    if in_int {
        out.push_str(" MARKER 'MARKER' 'INTEND'\n");
    }
    out.push_str("RHS\n");
    for (i, row) in lp.rows().iter().enumerate() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, " rhs r{i} {}", row.rhs);
        }
    }
    out.push_str("BOUNDS\n");
    for j in 0..lp.num_vars() {
        let name = lp.var_name(j);
        let (lo, hi) = lp.bounds(j);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) if lo == hi => {
                let _ = writeln!(out, " FX bnd {name} {lo}");
            }
            (false, false) => {
                let _ = writeln!(out, " FR bnd {name}");
            }
            (lo_fin, hi_fin) => {
                if !lo_fin {
                    let _ = writeln!(out, " MI bnd {name}");
                } else if lo != 0.0 {
                    let _ = writeln!(out, " LO bnd {name} {lo}");
                }
                if hi_fin {
                    let _ = writeln!(out, " UP bnd {name} {hi}");
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
