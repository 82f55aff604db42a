//! Exhaustive solvers for desk-scale verification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::metric::{self, DepotSet, Instance, Which};
use crate::mst;
use crate::search::{self, Objective};

/// Largest number of k-subsets a subset scan will visit.
pub const SUBSET_GUARD: u128 = 10_000_000;

/// Largest customer count accepted by [`brute_cvrp`].
pub const CVRP_CUSTOMER_LIMIT: usize = 12;

/// Relative tolerance for membership in an argmin family.
pub const ARGMIN_RTOL: f64 = 1e-12;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleObjective {
    /// Weighted k-median `Σ q_u·d(u,S)`.
    Median,
    /// `Tree(S)` in the given metric.
    Ktree { metric: Which },
    /// `Σ q_u·d(u,S) + ρ·Tree(S)`.
    Kmf(Objective),
    /// `max{Flow(S), Tree(S)}`; its minimum lower-bounds the k-LocVRP optimum.
    FlowTreeBound,
}

impl OracleObjective {
    fn check(&self, inst: &Instance) -> Result<()> {
        match self {
            OracleObjective::Median => Ok(()),
            OracleObjective::Ktree { metric } => {
                if *metric == Which::C && inst.c().is_none() {
                    return Err(Error::UniformInstance);
                }
                Ok(())
            }
            OracleObjective::Kmf(obj) => obj.check(inst),
            OracleObjective::FlowTreeBound => inst.require_capacity().map(|_| ()),
        }
    }

    fn eval(&self, inst: &Instance, set: &[usize]) -> f64 {
        match self {
            OracleObjective::Median => metric::med_unchecked(inst, set),
            OracleObjective::Ktree { metric } => mst::contracted_cost(inst.metric(*metric), set),
            OracleObjective::Kmf(obj) => search::phi_unchecked(inst, obj, set),
            OracleObjective::FlowTreeBound => {
                let cap = inst.capacity().expect("checked");
                let flow = metric::flow_from_med(metric::med_unchecked(inst, set), cap);
                flow.max(mst::contracted_cost(inst.d(), set))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub objective: OracleObjective,
    pub k: usize,
    pub opt_value: f64,
    /// Every k-subset within [`ARGMIN_RTOL`] of the optimum, sorted.
    pub argmins: Vec<DepotSet>,
    pub subsets_scanned: u128,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// The `rank`-th k-subset of `0..n` in lexicographic order.
fn unrank(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        loop {
            let rest = binomial(n - next - 1, k - slot - 1);
            if rank < rest {
                break;
            }
            rank -= rest;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

/// Advances `c` to the next k-subset of `0..n`; false after the last one.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
        return false;
    };
    c[i] += 1;
    for j in i + 1..k {
        c[j] = c[j - 1] + 1;
    }
    true
}

/// Running minimum plus every candidate still within tolerance of it.
///
/// A set within tolerance of the global minimum is within tolerance of every partial minimum,
/// so pruning against partial minima never loses an argmin.
struct Best {
    value: f64,
    candidates: Vec<(f64, Vec<usize>)>,
}

impl Best {
    fn empty() -> Self {
        Best {
            value: f64::INFINITY,
            candidates: Vec::new(),
        }
    }

    fn within(v: f64, opt: f64) -> bool {
        v <= opt + ARGMIN_RTOL * opt.abs()
    }

    fn prune(&mut self) {
        let opt = self.value;
        self.candidates.retain(|(v, _)| Self::within(*v, opt));
    }

    fn offer(&mut self, value: f64, set: &[usize]) {
        if value < self.value {
            self.value = value;
            self.prune();
        }
        if Self::within(value, self.value) {
            self.candidates.push((value, set.to_vec()));
        }
    }

    fn merge(mut self, other: Best) -> Best {
        self.value = self.value.min(other.value);
        self.candidates.extend(other.candidates);
        self.prune();
        self
    }
}

/// Scans every k-subset, returning the minimum of `objective` and all sets attaining it.
pub fn brute_subset_opt(
    inst: &Instance,
    k: usize,
    objective: &OracleObjective,
    policy: Parallelism,
) -> Result<OracleResult> {
    objective.check(inst)?;
    let n = inst.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={n}")));
    }
    let total = binomial(n, k);
    if total > SUBSET_GUARD {
        return Err(Error::Guard {
            count: total,
            limit: SUBSET_GUARD,
        });
    }
    let chunks = total.div_ceil(CHUNK as u128) as usize;
    let best = exec::fold_range(
        chunks,
        policy,
        Best::empty,
        |mut acc, chunk| {
            let start = chunk as u128 * CHUNK as u128;
            let len = (total - start).min(CHUNK as u128) as usize;
            let mut c = unrank(n, k, start);
            for i in 0..len {
                acc.offer(objective.eval(inst, &c), &c);
                if i + 1 < len {
                    next_combination(&mut c, n);
                }
            }
            acc
        },
        Best::merge,
    );
    let mut argmins: Vec<DepotSet> = best
        .candidates
        .into_iter()
        .map(|(_, s)| DepotSet::from_sorted(s))
        .collect();
    argmins.sort();
    Ok(OracleResult {
        objective: *objective,
        k,
        opt_value: best.value,
        argmins,
        subsets_scanned: total,
    })
}

/// `min_{|S|=k} max{Flow(S), Tree(S)}`: a lower bound on the k-LocVRP optimum.
pub fn exhaustive_lower_bound(inst: &Instance, k: usize, policy: Parallelism) -> Result<OracleResult> {
    brute_subset_opt(inst, k, &OracleObjective::FlowTreeBound, policy)
}

/// Exact minimum unsplit-delivery routing cost with depots fixed at `S`.
///
/// Customers (non-depot vertices with positive demand) are partitioned into trips of load at
/// most `Q`; each trip is priced by Held–Karp from its cheapest depot.
pub fn brute_cvrp(inst: &Instance, s: &DepotSet, limit: usize) -> Result<f64> {
    s.non_empty()?;
    let capacity = inst.require_capacity()?;
    let customers: Vec<usize> = (0..inst.n())
        .filter(|&u| inst.demand(u) > 0.0 && !s.contains(u))
        .collect();
    let m = customers.len();
    let limit = limit.min(CVRP_CUSTOMER_LIMIT);
    if m > limit {
        return Err(Error::Guard {
            count: m as u128,
            limit: limit as u128,
        });
    }
    if let Some(&u) = customers.iter().find(|&&u| inst.demand(u) > capacity) {
        return Err(Error::UnsplitInfeasible {
            vertex: u,
            demand: inst.demand(u),
            capacity,
        });
    }
    if m == 0 {
        return Ok(0.0);
    }
    let d = inst.d();
    let full = 1usize << m;

    // tour[mask]: cheapest closed tour from some depot through exactly the customers in mask.
    let mut tour = vec![f64::INFINITY; full];
    tour[0] = 0.0;
    let mut dp = vec![f64::INFINITY; full * m];
    for &f in s.members() {
        dp.fill(f64::INFINITY);
        for j in 0..m {
            dp[(1 << j) * m + j] = d.get(f, customers[j]);
        }
        for mask in 1..full {
            for last in 0..m {
                let here = dp[mask * m + last];
                if mask & (1 << last) == 0 || !here.is_finite() {
                    continue;
                }
                for next in 0..m {
                    if mask & (1 << next) != 0 {
                        continue;
                    }
                    let cand = here + d.get(customers[last], customers[next]);
                    let slot = &mut dp[(mask | 1 << next) * m + next];
                    if cand < *slot {
                        *slot = cand;
                    }
                }
            }
            let closed = (0..m)
                .filter(|&j| mask & (1 << j) != 0)
                .map(|j| dp[mask * m + j] + d.get(customers[j], f))
                .fold(f64::INFINITY, f64::min);
            if closed < tour[mask] {
                tour[mask] = closed;
            }
        }
    }

    let load = |mask: usize| -> f64 {
        (0..m)
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| inst.demand(customers[j]))
            .sum()
    };
    let feasible: Vec<bool> = (0..full).map(|mask| load(mask) <= capacity).collect();

    // best[mask]: cheapest partition of mask into feasible trips.
    let mut best = vec![f64::INFINITY; full];
    best[0] = 0.0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            if feasible[part] {
                let cand = tour[part] + best[mask ^ part];
                if cand < best[mask] {
                    best[mask] = cand;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDivergence {
    pub first: String,
    pub second: String,
    pub intersect: bool,
    /// Smallest symmetric difference between a member of each family.
    pub min_symmetric_difference: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub median: OracleResult,
    pub ktree: OracleResult,
    pub kmf: OracleResult,
    pub pairs: Vec<PairDivergence>,
    pub pairwise_disjoint: bool,
}

fn compare(first: &str, a: &OracleResult, second: &str, b: &OracleResult) -> PairDivergence {
    let min = a
        .argmins
        .iter()
        .flat_map(|x| b.argmins.iter().map(move |y| x.symmetric_difference_len(y)))
        .min()
        .unwrap_or(usize::MAX);
    PairDivergence {
        first: first.into(),
        second: second.into(),
        intersect: min == 0,
        min_symmetric_difference: min,
    }
}

/// How far apart the optimal sets of k-median, k-tree and k-median-forest (`ρ`) are.
pub fn divergence_report(inst: &Instance, k: usize, rho: f64, policy: Parallelism) -> Result<DivergenceReport> {
    let median = brute_subset_opt(inst, k, &OracleObjective::Median, policy)?;
    let ktree = brute_subset_opt(inst, k, &OracleObjective::Ktree { metric: Which::D }, policy)?;
    let kmf = brute_subset_opt(
        inst,
        k,
        &OracleObjective::Kmf(Objective::new(rho, Which::D)),
        policy,
    )?;
    let pairs = vec![
        compare("median", &median, "ktree", &ktree),
        compare("median", &median, "kmf", &kmf),
        compare("ktree", &ktree, "kmf", &kmf),
    ];
    let pairwise_disjoint = pairs.iter().all(|p| !p.intersect);
    Ok(DivergenceReport {
        median,
        ktree,
        kmf,
        pairs,
        pairwise_disjoint,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::kit::{self, RandomKind};
    use crate::metric::Metric;
    use crate::routing;
    use itertools::Itertools;

    fn sets(inst: &Instance, groups: &[&[&str]]) -> Vec<DepotSet> {
        let mut v: Vec<DepotSet> = groups
            .iter()
            .map(|g| inst.depot_set_by_labels(g).unwrap())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn unrank_matches_lexicographic_order() {
        let all: Vec<Vec<usize>> = (0..7).combinations(3).collect();
        for (i, c) in all.iter().enumerate() {
            assert_eq!(&unrank(7, 3, i as u128), c);
        }
        let mut c = vec![0, 1, 2];
        let mut count = 1;
        while next_combination(&mut c, 7) {
            assert_eq!(c, all[count]);
            count += 1;
        }
        assert_eq!(count, 35);
    }

    #[test]
    fn appendix_families() {
        let app = kit::gen_appendix(10).unwrap();
        for policy in [Parallelism::Sequential, Parallelism::Parallel] {
            let med = brute_subset_opt(&app, 4, &OracleObjective::Median, policy).unwrap();
            assert_eq!(med.opt_value, 11_000.0);
            assert_eq!(med.argmins, sets(&app, &[&["u1", "u2", "v1", "v2"]]));
            assert_eq!(med.subsets_scanned, 15);

            let kt = brute_subset_opt(&app, 4, &OracleObjective::Ktree { metric: Which::D }, policy).unwrap();
            assert_eq!(kt.opt_value, 110.0);
            assert_eq!(kt.argmins.len(), 4);

            let kmf = brute_subset_opt(
                &app,
                4,
                &OracleObjective::Kmf(Objective::new(100.0, Which::D)),
                policy,
            )
            .unwrap();
            assert_eq!(kmf.opt_value, 202_000.0);
            assert_eq!(
                kmf.argmins,
                sets(&app, &[&["u1", "u2", "v0", "v1"], &["u1", "u2", "v0", "v2"]])
            );
        }
        let report = divergence_report(&app, 4, 100.0, Parallelism::Parallel).unwrap();
        assert!(report.pairwise_disjoint);
    }

    #[test]
    fn uniform_metric_families_intersect() {
        let d = Metric::from_fn(6, |i, j| if i == j { 0.0 } else { 1.0 });
        let inst = Instance::new(d, vec![1.0; 6], 2).unwrap();
        let report = divergence_report(&inst, 2, 1.0, Parallelism::Sequential).unwrap();
        assert_eq!(report.median.argmins.len(), 15);
        assert!(report.pairs.iter().all(|p| p.intersect && p.min_symmetric_difference == 0));
        assert!(!report.pairwise_disjoint);
    }

    #[test]
    fn divergence_matches_recomputation() {
        let inst = kit::gen_random(7, 3, 21, RandomKind::Euclidean).unwrap();
        let report = divergence_report(&inst, 3, 2.0, Parallelism::Parallel).unwrap();
        let fams = [&report.median, &report.ktree, &report.kmf];
        for (p, (a, b)) in report.pairs.iter().zip([(0, 1), (0, 2), (1, 2)]) {
            let direct = fams[a]
                .argmins
                .iter()
                .cartesian_product(fams[b].argmins.iter())
                .map(|(x, y)| {
                    x.members().iter().filter(|v| !y.contains(**v)).count()
                        + y.members().iter().filter(|v| !x.contains(**v)).count()
                })
                .min()
                .unwrap();
            assert_eq!(p.min_symmetric_difference, direct);
            assert_eq!(p.intersect, direct == 0);
        }
    }

    #[test]
    fn argmins_attain_the_optimum() {
        for seed in 0..5 {
            let inst = kit::gen_random(9, 3, seed, RandomKind::ShortestPathCompletion).unwrap();
            let obj = OracleObjective::Kmf(Objective::new(1.5, Which::D));
            let r = brute_subset_opt(&inst, 3, &obj, Parallelism::Parallel).unwrap();
            let seq = brute_subset_opt(&inst, 3, &obj, Parallelism::Sequential).unwrap();
            assert_eq!(r, seq);
            let mut min = f64::INFINITY;
            for c in (0..9).combinations(3) {
                min = min.min(obj.eval(&inst, &c));
            }
            assert_eq!(r.opt_value, min);
            for s in &r.argmins {
                assert!(obj.eval(&inst, s.members()) <= min * (1.0 + ARGMIN_RTOL));
            }
        }
    }

    #[test]
    fn subset_guard_trips() {
        let inst = kit::gen_random(40, 20, 0, RandomKind::Euclidean).unwrap();
        assert!(matches!(
            brute_subset_opt(&inst, 20, &OracleObjective::Median, Parallelism::Sequential),
            Err(Error::Guard { .. })
        ));
    }

    #[test]
    fn cvrp_small_cases() {
        let star = Instance::new(
            Metric::from_rows(vec![
                vec![0.0, 1.0, 1.0],
                vec![1.0, 0.0, 2.0],
                vec![1.0, 2.0, 0.0],
            ])
            .unwrap(),
            vec![0.0, 1.0, 1.0],
            1,
        )
        .unwrap()
        .with_capacity(2.0);
        let s = DepotSet::new(vec![0], 3).unwrap();
        assert_eq!(brute_cvrp(&star, &s, 8).unwrap(), 4.0);
        // Capacity 1 forces two round trips.
        assert_eq!(brute_cvrp(&star.clone().with_capacity(1.0), &s, 8).unwrap(), 4.0);

        let zero = Instance::new(star.d().clone(), vec![0.0; 3], 1).unwrap().with_capacity(1.0);
        assert_eq!(brute_cvrp(&zero, &s, 8).unwrap(), 0.0);

        let inst = kit::gen_random(2, 1, 4, RandomKind::Euclidean).unwrap();
        let s = DepotSet::new(vec![0], 2).unwrap();
        assert_eq!(brute_cvrp(&inst, &s, 8).unwrap(), 2.0 * inst.d().get(0, 1));
    }

    #[test]
    fn cvrp_matches_permutation_scan() {
        // Independent check: every ordering of customers cut greedily into capacity-feasible
        // consecutive runs, each run served by its best depot.
        for seed in 0..6 {
            let inst = kit::gen_random(7, 2, seed, RandomKind::Euclidean).unwrap();
            let s = DepotSet::new(vec![0, 1], 7).unwrap();
            let cap = inst.capacity().unwrap();
            let customers: Vec<usize> = (2..7).collect();
            let mut best = f64::INFINITY;
            for perm in customers.iter().copied().permutations(5) {
                // Try every set of cut points.
                for cuts in 0u32..16 {
                    let mut cost = 0.0;
                    let mut ok = true;
                    let mut run = vec![perm[0]];
                    let mut runs = Vec::new();
                    for (i, &v) in perm.iter().enumerate().skip(1) {
                        if cuts & (1 << (i - 1)) != 0 {
                            runs.push(std::mem::take(&mut run));
                        }
                        run.push(v);
                    }
                    runs.push(run);
                    for r in &runs {
                        let load: f64 = r.iter().map(|&u| inst.demand(u)).sum();
                        if load > cap {
                            ok = false;
                            break;
                        }
                        cost += s
                            .members()
                            .iter()
                            .map(|&f| routing::trip_length(&inst, f, r))
                            .fold(f64::INFINITY, f64::min);
                    }
                    if ok {
                        best = best.min(cost);
                    }
                }
            }
            let got = brute_cvrp(&inst, &s, 8).unwrap();
            assert!((got - best).abs() < 1e-9, "seed {seed}: {got} vs {best}");
        }
    }

    #[test]
    fn cvrp_guard() {
        let inst = kit::gen_random(12, 1, 0, RandomKind::Euclidean).unwrap();
        let s = DepotSet::new(vec![0], 12).unwrap();
        assert!(matches!(brute_cvrp(&inst, &s, 8), Err(Error::Guard { count: 11, limit: 8 })));
    }
}
