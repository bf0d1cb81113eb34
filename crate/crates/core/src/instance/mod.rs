//! Problem data: decision-dependent state probabilities, allocations and the
//! second-stage recourse model.

mod file;
mod recourse;

pub use file::{ExplicitRecourse, InstanceFile, NetworkRecourse, ProbFormula, ProbSpec, RecourseSpec, RowSense};
pub use recourse::{Recourse, StateLp, StateRow, UpperForm};

use crate::{Error, Result};

/// Largest number of states any enumeration may materialize.
pub const SCENARIO_LIMIT: u128 = 1 << 24;

const SUM_TOL: f64 = 1e-12;

/// Dense table `p[i][kappa][level]`: probability that component `i` ends in
/// state `kappa` when allocated `level`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateProbabilityTable {
    n: usize,
    k: usize,
    l: usize,
    // laid out as [i][level][kappa] so a distribution is contiguous
    p: Vec<f64>,
}

impl StateProbabilityTable {
    /// Builds from a nested `[i][kappa][level]` tensor.
    pub fn new(k: usize, l: usize, p: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = p.len();
        let mut flat = vec![0.0; n * (l + 1) * (k + 1)];
        for (i, by_state) in p.iter().enumerate() {
            if by_state.len() != k + 1 {
                return Err(Error::input(format!(
                    "component {i}: expected {} states, got {}",
                    k + 1,
                    by_state.len()
                )));
            }
            for (kappa, by_level) in by_state.iter().enumerate() {
                if by_level.len() != l + 1 {
                    return Err(Error::input(format!(
                        "component {i}, state {kappa}: expected {} levels, got {}",
                        l + 1,
                        by_level.len()
                    )));
                }
                for (level, &v) in by_level.iter().enumerate() {
                    flat[(i * (l + 1) + level) * (k + 1) + kappa] = v;
                }
            }
        }
        Self::from_fn(n, k, l, |i, kappa, level| flat[(i * (l + 1) + level) * (k + 1) + kappa])
    }

    pub fn from_fn(n: usize, k: usize, l: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut p = Vec::with_capacity(n * (l + 1) * (k + 1));
        for i in 0..n {
            for level in 0..=l {
                let mut sum = 0.0;
                for kappa in 0..=k {
                    let v = f(i, kappa, level);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::input(format!(
                            "p[{i}][{kappa}][{level}] = {v} is not a probability"
                        )));
                    }
                    sum += v;
                    p.push(v);
                }
                if (sum - 1.0).abs() > SUM_TOL {
                    return Err(Error::input(format!(
                        "component {i} at level {level}: probabilities sum to {sum}"
                    )));
                }
            }
        }
        Ok(StateProbabilityTable { n, k, l, p })
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn max_state(&self) -> usize {
        self.k
    }

    pub fn max_level(&self) -> usize {
        self.l
    }

    pub fn prob(&self, i: usize, kappa: usize, level: usize) -> f64 {
        self.distribution(i, level)[kappa]
    }

    /// State distribution of component `i` under allocation `level`.
    pub fn distribution(&self, i: usize, level: usize) -> &[f64] {
        let start = (i * (self.l + 1) + level) * (self.k + 1);
        &self.p[start..start + self.k + 1]
    }

    /// Mean state of component `i` under allocation `level`.
    pub fn mean(&self, i: usize, level: usize) -> f64 {
        self.distribution(i, level)
            .iter()
            .enumerate()
            .map(|(kappa, p)| kappa as f64 * p)
            .sum()
    }

    /// Whether some positive state has positive probability at some level.
    pub fn is_varying(&self, i: usize) -> bool {
        (0..=self.l).any(|level| self.distribution(i, level)[1..].iter().any(|&p| p > 0.0))
    }
}

/// First-stage decision: the level chosen for each component. Storing
/// levels keeps the one-hot assignment constraint true by construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocationVector(Vec<usize>);

impl AllocationVector {
    pub fn new(levels: Vec<usize>) -> Self {
        AllocationVector(levels)
    }

    pub fn zeros(n: usize) -> Self {
        AllocationVector(vec![0; n])
    }

    /// Reads a one-hot binary matrix `x[i][level]` (entries within `tol` of
    /// 0 or 1, exactly one 1 per row).
    pub fn from_indicators(x: &[Vec<f64>], tol: f64) -> Result<Self> {
        let mut levels = Vec::with_capacity(x.len());
        for (i, row) in x.iter().enumerate() {
            let mut pick = None;
            for (level, &v) in row.iter().enumerate() {
                if (v - 1.0).abs() <= tol {
                    if pick.replace(level).is_some() {
                        return Err(Error::input(format!("component {i} has two levels set")));
                    }
                } else if v.abs() > tol {
                    return Err(Error::input(format!("x[{i}][{level}] = {v} is not binary")));
                }
            }
            levels.push(pick.ok_or_else(|| Error::input(format!("component {i} has no level")))?);
        }
        Ok(AllocationVector(levels))
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn level(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indicator(&self, i: usize, level: usize) -> f64 {
        if self.0[i] == level {
            1.0
        } else {
            0.0
        }
    }

    /// Total allocated units `sum_i level_i`.
    pub fn used(&self) -> usize {
        self.0.iter().sum()
    }
}

/// A complete problem instance. Immutable once built.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    table: StateProbabilityTable,
    alloc_cost: Vec<Vec<f64>>,
    budget: u32,
    recourse: Recourse,
    varying: Vec<usize>,
    theta_bounds: (f64, f64),
}

impl Instance {
    /// Assembles an instance. When `theta_bounds` is `None` the range of the
    /// second-stage value is taken from its values at the all-zero and
    /// all-`K` states (the value is monotone in each state).
    pub fn new(
        name: impl Into<String>,
        table: StateProbabilityTable,
        alloc_cost: Vec<Vec<f64>>,
        budget: u32,
        recourse: Recourse,
        theta_bounds: Option<(f64, f64)>,
    ) -> Result<Self> {
        let n = table.components();
        if alloc_cost.len() != n || alloc_cost.iter().any(|row| row.len() != table.max_level() + 1) {
            return Err(Error::input(format!(
                "alloc_cost must be {n} x {}",
                table.max_level() + 1
            )));
        }
        if alloc_cost.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::input("alloc_cost entries must be finite"));
        }
        if recourse.components() != n {
            return Err(Error::input(format!(
                "recourse has {} components, table has {n}",
                recourse.components()
            )));
        }
        let varying = (0..n).filter(|&i| table.is_varying(i)).collect();
        let theta_bounds = match theta_bounds {
            Some((lo, hi)) if lo <= hi && lo.is_finite() && hi.is_finite() => (lo, hi),
            Some(b) => return Err(Error::input(format!("bad theta bounds {b:?}"))),
            None => {
                let a = recourse.lower_value(&vec![0.0; n])?;
                let b = recourse.lower_value(&vec![table.max_state() as f64; n])?;
                (a.min(b), a.max(b))
            }
        };
        Ok(Instance {
            name: name.into(),
            table,
            alloc_cost,
            budget,
            recourse,
            varying,
            theta_bounds,
        })
    }

    pub fn n(&self) -> usize {
        self.table.components()
    }

    pub fn k(&self) -> usize {
        self.table.max_state()
    }

    pub fn l(&self) -> usize {
        self.table.max_level()
    }

    pub fn table(&self) -> &StateProbabilityTable {
        &self.table
    }

    pub fn alloc_cost(&self, i: usize, level: usize) -> f64 {
        self.alloc_cost[i][level]
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    /// Right-hand side of the budget row `sum_i sum_l l x_il <= budget * L`.
    pub fn budget_rhs(&self) -> usize {
        self.budget as usize * self.l()
    }

    pub fn recourse(&self) -> &Recourse {
        &self.recourse
    }

    pub fn varying(&self) -> &[usize] {
        &self.varying
    }

    /// Bounds `[lo, hi]` on the second-stage value over all (fractional)
    /// states.
    pub fn theta_bounds(&self) -> (f64, f64) {
        self.theta_bounds
    }

    pub fn check_allocation(&self, x: &AllocationVector) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::input(format!(
                "allocation has {} components, instance has {}",
                x.len(),
                self.n()
            )));
        }
        if let Some(i) = x.levels().iter().position(|&l| l > self.l()) {
            return Err(Error::input(format!("component {i} level exceeds L = {}", self.l())));
        }
        if x.used() > self.budget_rhs() {
            return Err(Error::input(format!(
                "allocation uses {} units, budget allows {}",
                x.used(),
                self.budget_rhs()
            )));
        }
        Ok(())
    }

    pub fn first_stage_cost(&self, x: &AllocationVector) -> f64 {
        x.levels()
            .iter()
            .enumerate()
            .map(|(i, &l)| self.alloc_cost[i][l])
            .sum()
    }

    /// `prod_i p[i][xi_i][x_i]`.
    pub fn realization_probability(&self, x: &AllocationVector, xi: &[usize]) -> Result<f64> {
        self.check_dims(x, xi.len())?;
        if let Some(i) = xi.iter().position(|&s| s > self.k()) {
            return Err(Error::input(format!("state of component {i} exceeds K = {}", self.k())));
        }
        Ok(xi
            .iter()
            .enumerate()
            .map(|(i, &s)| self.table.prob(i, s, x.level(i)))
            .product())
    }

    /// Expected state vector given `x`, with `fixed` components pinned to
    /// the given states.
    pub fn expected_state(&self, x: &AllocationVector, fixed: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.check_dims(x, self.n())?;
        let mut mean: Vec<f64> = (0..self.n()).map(|i| self.table.mean(i, x.level(i))).collect();
        for &(i, s) in fixed {
            if i >= self.n() || s > self.k() {
                return Err(Error::input(format!("fixed state ({i}, {s}) out of range")));
            }
            mean[i] = s as f64;
        }
        Ok(mean)
    }

    /// Number of joint states of the varying components.
    pub fn scenario_count(&self) -> u128 {
        state_count(self.varying.len(), self.k())
    }

    /// All joint states, non-varying components at their sure state 0, in
    /// lexicographic order over the varying components.
    pub fn enumerate_scenarios(&self) -> Result<Vec<Vec<usize>>> {
        let required = self.scenario_count();
        if required > SCENARIO_LIMIT {
            return Err(Error::Capacity {
                what: "scenario enumeration",
                required,
                limit: SCENARIO_LIMIT,
            });
        }
        let mut out = Vec::with_capacity(required as usize);
        for_each_state(&self.varying, self.k(), vec![0; self.n()], |s| out.push(s.to_vec()));
        Ok(out)
    }

    fn check_dims(&self, x: &AllocationVector, len: usize) -> Result<()> {
        if x.len() != self.n() || len != self.n() {
            return Err(Error::input(format!(
                "dimension mismatch: instance has {} components",
                self.n()
            )));
        }
        if let Some(i) = x.levels().iter().position(|&l| l > self.l()) {
            return Err(Error::input(format!("component {i} level exceeds L = {}", self.l())));
        }
        Ok(())
    }
}

/// `(k + 1)^m`, saturating.
pub fn state_count(m: usize, k: usize) -> u128 {
    (0..m).fold(1u128, |acc, _| acc.saturating_mul(k as u128 + 1))
}

/// Visits every assignment of states `0..=k` to `components`, starting from
/// `base` for the other entries. The last listed component varies fastest.
pub fn for_each_state(components: &[usize], k: usize, mut base: Vec<usize>, mut f: impl FnMut(&[usize])) {
    for &i in components {
        base[i] = 0;
    }
    loop {
        f(&base);
        let mut pos = components.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            let i = components[pos];
            if base[i] < k {
                base[i] += 1;
                break;
            }
            base[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Row;
    use proptest::prelude::*;

    /// Two-component instance: `min y0 + y1` with `y_i <= xi_i`, demand
    /// ignored, so the second stage is always 0.
    fn trivial(k: usize, l: usize, p: Vec<Vec<Vec<f64>>>) -> Instance {
        let n = p.len();
        let table = StateProbabilityTable::new(k, l, &p).unwrap();
        let recourse =
            Recourse::capacity(n, vec![1.0; n], Vec::new(), (0..n).collect(), vec![1.0; n], vec![1.0; n])
                .unwrap();
        Instance::new("t", table, vec![vec![0.0; l + 1]; n], 1, recourse, None).unwrap()
    }

    fn half_half() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.5], vec![0.0, 0.5]]
    }

    #[test]
    fn realization_probability_examples() {
        let inst = trivial(1, 1, vec![half_half()]);
        let x = AllocationVector::new(vec![1]);
        assert_eq!(inst.realization_probability(&x, &[1]).unwrap(), 0.5);

        let inst = trivial(1, 1, vec![half_half(), half_half()]);
        let x = AllocationVector::new(vec![1, 1]);
        assert_eq!(inst.realization_probability(&x, &[1, 1]).unwrap(), 0.25);
        assert!(matches!(
            inst.realization_probability(&x, &[1]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn deterministic_instance_has_one_scenario() {
        let inst = trivial(1, 1, vec![vec![vec![1.0, 1.0], vec![0.0, 0.0]]]);
        assert!(inst.varying().is_empty());
        let s = inst.enumerate_scenarios().unwrap();
        assert_eq!(s, vec![vec![0]]);
        let x = AllocationVector::new(vec![1]);
        assert_eq!(inst.realization_probability(&x, &s[0]).unwrap(), 1.0);
    }

    #[test]
    fn scenario_counts() {
        let inst = trivial(1, 1, vec![half_half(); 3]);
        assert_eq!(inst.enumerate_scenarios().unwrap().len(), 8);
        let three = vec![vec![0.2; 2], vec![0.3; 2], vec![0.5; 2]];
        let inst = trivial(2, 1, vec![three.clone(), three]);
        let s = inst.enumerate_scenarios().unwrap();
        assert_eq!(s.len(), 9);
        let mut d = s.clone();
        d.dedup();
        assert_eq!(d.len(), 9);
    }

    #[test]
    fn scenario_guard() {
        let inst = trivial(1, 1, vec![half_half(); 25]);
        assert!(matches!(
            inst.enumerate_scenarios(),
            Err(Error::Capacity { required, .. }) if required == 1 << 25
        ));
    }

    #[test]
    fn expected_state_examples() {
        let inst = trivial(1, 1, vec![half_half()]);
        let x = AllocationVector::new(vec![1]);
        assert_eq!(inst.expected_state(&x, &[]).unwrap(), vec![0.5]);
        assert_eq!(inst.expected_state(&x, &[(0, 0)]).unwrap(), vec![0.0]);
        assert!(inst.expected_state(&x, &[(0, 2)]).is_err());

        let inst = trivial(2, 0, vec![vec![vec![0.2], vec![0.3], vec![0.5]]]);
        let m = inst.expected_state(&AllocationVector::zeros(1), &[]).unwrap();
        assert!((m[0] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalized_table() {
        let bad = vec![vec![vec![0.5, 1.0], vec![0.4, 0.0]]];
        assert!(StateProbabilityTable::new(1, 1, &bad).is_err());
    }

    #[test]
    fn allocation_from_indicators() {
        let x = AllocationVector::from_indicators(&[vec![0.0, 1.0], vec![1.0 - 1e-9, 0.0]], 1e-6).unwrap();
        assert_eq!(x.levels(), &[1, 0]);
        assert!(AllocationVector::from_indicators(&[vec![0.5, 0.5]], 1e-6).is_err());
        assert!(AllocationVector::from_indicators(&[vec![1.0, 1.0]], 1e-6).is_err());
    }

    #[test]
    fn theta_bounds_come_from_corner_states() {
        // min -y, y <= 3 xi: value -3 xi on [0, 1].
        let rec = Recourse::capacity(1, vec![-1.0], Vec::<Row>::new(), vec![0], vec![3.0], vec![3.0]).unwrap();
        let table = StateProbabilityTable::new(1, 1, &[half_half()]).unwrap();
        let inst = Instance::new("b", table, vec![vec![0.0, 0.0]], 1, rec, None).unwrap();
        assert_eq!(inst.theta_bounds(), (-3.0, 0.0));
    }

    fn table_strategy() -> impl Strategy<Value = (usize, usize, Vec<Vec<Vec<f64>>>)> {
        (1usize..=4, 1usize..=2, 1usize..=2).prop_flat_map(|(n, k, l)| {
            let dist = prop::collection::vec(0.0f64..1.0, k + 1);
            prop::collection::vec(prop::collection::vec(dist, l + 1), n).prop_map(move |raw| {
                // raw[i][level][kappa] -> normalized p[i][kappa][level]
                let p = raw
                    .iter()
                    .map(|levels| {
                        let norm: Vec<Vec<f64>> = levels
                            .iter()
                            .map(|d| {
                                let s: f64 = d.iter().sum::<f64>() + 1e-3;
                                let mut v: Vec<f64> = d.iter().map(|x| (x + 1e-3 / (k + 1) as f64) / s).collect();
                                let tail: f64 = v[1..].iter().sum();
                                v[0] = 1.0 - tail;
                                v
                            })
                            .collect();
                        (0..=k)
                            .map(|kappa| (0..=l).map(|lv| norm[lv][kappa]).collect())
                            .collect()
                    })
                    .collect();
                (k, l, p)
            })
        })
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_mean_matches((k, l, p) in table_strategy(), seed in 0u64..1000) {
            let n = p.len();
            let inst = trivial(k, l, p);
            let x = AllocationVector::new((0..n).map(|i| (seed as usize / (i + 1)) % (l + 1)).collect());
            let scen = inst.enumerate_scenarios().unwrap();
            let mut total = 0.0;
            let mut mean = vec![0.0; n];
            for s in &scen {
                let pr = inst.realization_probability(&x, s).unwrap();
                total += pr;
                for i in 0..n {
                    mean[i] += pr * s[i] as f64;
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-9);
            let expected = inst.expected_state(&x, &[]).unwrap();
            for i in 0..n {
                prop_assert!((mean[i] - expected[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn realization_probability_is_multiplicative((k, l, p) in table_strategy(), pick in 0usize..64) {
            let n = p.len();
            let inst = trivial(k, l, p);
            let x = AllocationVector::new(vec![l; n]);
            let scen = inst.enumerate_scenarios().unwrap();
            let s = &scen[pick % scen.len()];
            let split = n / 2;
            let block = |range: std::ops::Range<usize>| -> f64 {
                range.map(|i| inst.table().prob(i, s[i], l)).product()
            };
            let whole = inst.realization_probability(&x, s).unwrap();
            prop_assert!((whole - block(0..split) * block(split..n)).abs() < 1e-15);
        }
    }
}
