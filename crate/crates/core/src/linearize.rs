//! Linearization of products between binary and bounded continuous
//! variables, and of multilinear chains `f_1(x) f_2(x) ... f_m(x) t`.

use std::ops::Range;

use crate::lp::{LinearProgram, Row};
use crate::{Error, Result};

/// Auxiliary variable `z = b * t` and the four rows defining it.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductAux {
    pub z: usize,
    pub b: usize,
    pub t: usize,
    pub lo: f64,
    pub hi: f64,
    pub rows: Range<usize>,
}

/// Adds `z` with
/// `z <= hi b`, `z >= lo b`, `z <= t - lo (1 - b)`, `z >= t - hi (1 - b)`.
/// Exact when `b` is binary; the convex hull of the product otherwise.
pub fn mccormick_product(lp: &mut LinearProgram, b: usize, t: usize, lo: f64, hi: f64) -> Result<ProductAux> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::input(format!("product bounds [{lo}, {hi}] must be finite and ordered")));
    }
    let z = lp.add_var(0.0, lo.min(0.0), hi.max(0.0));
    let rows = lp.add_rows(vec![
        Row::le(vec![(z, 1.0), (b, -hi)], 0.0),
        Row::ge(vec![(z, 1.0), (b, -lo)], 0.0),
        Row::le(vec![(z, 1.0), (t, -1.0), (b, -lo)], -lo),
        Row::ge(vec![(z, 1.0), (t, -1.0), (b, -hi)], -hi),
    ])?;
    Ok(ProductAux { z, b, t, lo, hi, rows })
}

/// Affine expression `constant + sum_j a_j x_j` over binary variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinaryExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl BinaryExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    /// Range of the expression over the unit box.
    pub fn range(&self) -> (f64, f64) {
        self.terms.iter().fold((self.constant, self.constant), |(lo, hi), &(_, a)| {
            (lo + a.min(0.0), hi + a.max(0.0))
        })
    }
}

/// Result of [`chain_multilinear`]: `stages[k]` holds the partial product
/// of the first `k + 1` factors and the tail; `output` is the last stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub auxes: Vec<ProductAux>,
    pub stages: Vec<usize>,
    pub output: usize,
    pub bounds: (f64, f64),
}

/// Linearizes `f_1(x) * ... * f_m(x) * t` left to right. Each stage is
/// `v_k = c_k v_{k-1} + sum_j a_kj z_kj` with `z_kj = x_j v_{k-1}`, so the
/// output equals the product at every binary point.
pub fn chain_multilinear(
    lp: &mut LinearProgram,
    factors: &[BinaryExpr],
    tail: usize,
    tail_bounds: (f64, f64),
) -> Result<Chain> {
    if factors.is_empty() {
        return Err(Error::input("multilinear chain needs at least one factor"));
    }
    let (mut lo, mut hi) = tail_bounds;
    let mut prev = tail;
    let mut auxes = Vec::new();
    let mut stages = Vec::with_capacity(factors.len());
    for f in factors {
        let mut row = vec![(prev, f.constant)];
        for &(j, a) in &f.terms {
            let aux = mccormick_product(lp, j, prev, lo, hi)?;
            row.push((aux.z, a));
            auxes.push(aux);
        }
        let (flo, fhi) = f.range();
        let corners = [flo * lo, flo * hi, fhi * lo, fhi * hi];
        let nlo = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let nhi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = lp.add_var(0.0, nlo, nhi);
        row.push((v, -1.0));
        lp.add_row(Row::eq(row, 0.0))?;
        stages.push(v);
        prev = v;
        lo = nlo;
        hi = nhi;
    }
    Ok(Chain {
        auxes,
        output: prev,
        stages,
        bounds: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Min and max of `target` with the given variables pinned.
    fn range_of(lp: &LinearProgram, target: usize, pins: &[(usize, f64)]) -> (f64, f64) {
        let overrides: Vec<(usize, f64, f64)> = pins.iter().map(|&(j, v)| (j, v, v)).collect();
        let mut probe = lp.clone();
        for j in 0..probe.num_vars() {
            probe.set_cost(j, 0.0);
        }
        let mut solve = |sign: f64| {
            probe.set_cost(target, sign);
            let sol = probe
                .solve_with(&crate::lp::SolveOptions {
                    bound_overrides: &overrides,
                    ..Default::default()
                })
                .unwrap();
            assert!(sol.is_optimal());
            sign * sol.objective
        };
        (solve(1.0), solve(-1.0))
    }

    fn product_lp() -> (LinearProgram, ProductAux) {
        let mut lp = LinearProgram::new();
        let b = lp.add_var(0.0, 0.0, 1.0);
        let t = lp.add_var(0.0, 0.0, 4.0);
        let aux = mccormick_product(&mut lp, b, t, 0.0, 4.0).unwrap();
        (lp, aux)
    }

    #[test]
    fn product_examples() {
        let (lp, aux) = product_lp();
        let (lo, hi) = range_of(&lp, aux.z, &[(aux.b, 1.0), (aux.t, 3.0)]);
        assert!((lo - 3.0).abs() < 1e-9 && (hi - 3.0).abs() < 1e-9);
        let (lo, hi) = range_of(&lp, aux.z, &[(aux.b, 0.0), (aux.t, 2.5)]);
        assert!(lo.abs() < 1e-9 && hi.abs() < 1e-9);
        let (lo, hi) = range_of(&lp, aux.z, &[(aux.b, 0.5), (aux.t, 4.0)]);
        assert!((lo - 2.0).abs() < 1e-9 && (hi - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_bounds_rejected() {
        let mut lp = LinearProgram::new();
        let b = lp.add_var(0.0, 0.0, 1.0);
        let t = lp.add_var(0.0, 0.0, f64::INFINITY);
        assert!(matches!(
            mccormick_product(&mut lp, b, t, 0.0, f64::INFINITY),
            Err(Error::Input(_))
        ));
        assert!(chain_multilinear(&mut lp, &[], t, (0.0, 1.0)).is_err());
    }

    #[test]
    fn two_half_factors_times_eight() {
        let mut lp = LinearProgram::new();
        let x0 = lp.add_var(0.0, 0.0, 1.0);
        let x1 = lp.add_var(0.0, 0.0, 1.0);
        let t = lp.add_var(0.0, 0.0, 8.0);
        let f = |x| BinaryExpr {
            constant: 0.0,
            terms: vec![(x, 0.5)],
        };
        let chain = chain_multilinear(&mut lp, &[f(x0), f(x1)], t, (0.0, 8.0)).unwrap();
        let (lo, hi) = range_of(&lp, chain.output, &[(x0, 1.0), (x1, 1.0), (t, 8.0)]);
        assert!((lo - 2.0).abs() < 1e-9 && (hi - 2.0).abs() < 1e-9);
        // a zero factor annihilates the chain
        let (lo, hi) = range_of(&lp, chain.output, &[(x0, 0.0), (x1, 1.0), (t, 8.0)]);
        assert!(lo.abs() < 1e-9 && hi.abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hull_contains_product(b in 0.0f64..=1.0, t in -3.0f64..=5.0) {
            let mut lp = LinearProgram::new();
            let bv = lp.add_var(0.0, 0.0, 1.0);
            let tv = lp.add_var(0.0, -3.0, 5.0);
            let aux = mccormick_product(&mut lp, bv, tv, -3.0, 5.0).unwrap();
            let (lo, hi) = range_of(&lp, aux.z, &[(bv, b), (tv, t)]);
            prop_assert!(lo - 1e-9 <= b * t && b * t <= hi + 1e-9);
        }

        #[test]
        fn chain_exact_at_binary_points(
            m in 1usize..=6,
            seed in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, any::<bool>()), 6),
            tail in 0.0f64..10.0,
        ) {
            // factor k = c_k + a_k x_k with values in [0, 1]
            let mut lp = LinearProgram::new();
            let xs: Vec<usize> = (0..m).map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
            let t = lp.add_var(0.0, 0.0, 10.0);
            let factors: Vec<BinaryExpr> = (0..m)
                .map(|k| {
                    let (c, a, _) = seed[k];
                    BinaryExpr { constant: c * 0.5, terms: vec![(xs[k], a * 0.5)] }
                })
                .collect();
            let chain = chain_multilinear(&mut lp, &factors, t, (0.0, 10.0)).unwrap();
            let point: Vec<f64> = (0..m).map(|k| seed[k].2 as u8 as f64).collect();
            let direct: f64 = factors.iter().map(|f| f.eval(&point)).product::<f64>() * tail;
            let mut pins: Vec<(usize, f64)> = xs.iter().copied().zip(point.iter().copied()).collect();
            pins.push((t, tail));
            let (lo, hi) = range_of(&lp, chain.output, &pins);
            prop_assert!((lo - direct).abs() < 1e-9 && (hi - direct).abs() < 1e-9);
        }
    }
}
