//! End-to-end solvers for k-LocVRP (choose `k` depots, then route capacitated vehicles).
//!
//! [`solve_klocvrp`] runs local search on the k-median-forest objective with `ρ = Q/2` and
//! routes from the resulting depots; [`solve_bicriteria`] opens the union of a k-median
//! local optimum and an optimal k-tree (at most `2k` depots). Both attach a lower bound: the
//! depot-specific `max{Flow, Tree}`, strengthened on small instances by the exhaustive
//! `min_S max{Flow(S), Tree(S)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::metric::{DepotSet, Instance, ObjectiveReport, Which};
use crate::mst;
use crate::oracle;
use crate::routing::{self, RoutePlan};
use crate::search::{self, Init, Objective, SearchConfig, SearchTrace, Termination};

/// Largest `n` for which the exhaustive lower bound is computed.
pub const EXHAUSTIVE_LB_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Locvrp,
    Kmf,
    Kmedian,
    Ktree,
    Bicriteria,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub t: usize,
    pub delta: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: Option<u64>,
    /// Not serialized: results do not depend on it.
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            t: 2,
            delta: 1e-7,
            restarts: 8,
            seed: 0,
            max_iters: None,
            parallelism: Parallelism::default(),
        }
    }
}

impl SolveParams {
    fn search_config(&self) -> SearchConfig {
        SearchConfig {
            t: self.t,
            delta: self.delta,
            max_iters: self.max_iters,
            parallelism: self.parallelism,
        }
    }

    /// Restart seeds `seed, seed + 1, …`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.restarts as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub initial_phi: f64,
    pub final_phi: f64,
    pub iterations: u64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub objective: Objective,
    pub best_seed: u64,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub mode: Mode,
    pub k: usize,
    pub depots: DepotSet,
    /// `|depots| / k`; above 1 only for the bicriteria mode.
    pub budget_factor: f64,
    pub plan: Option<RoutePlan>,
    pub report: ObjectiveReport,
    /// Best certified lower bound on the cost of any routing with at most `|depots|` depots.
    pub lb: Option<f64>,
    /// `max{Flow, Tree}` of the chosen depots.
    pub lb_depots: Option<f64>,
    /// `min_{|S| = k} max{Flow(S), Tree(S)}`, when `n` is small enough to scan.
    pub lb_exhaustive: Option<f64>,
    /// True when `lb` bounds the optimum and not only routings from these depots.
    pub lb_certifies_optimum: bool,
    /// `plan.total_cost / lb`.
    pub ratio: Option<f64>,
    /// `plan.total_cost / lb_exhaustive`.
    pub ratio_exhaustive: Option<f64>,
    pub params: SolveParams,
    pub search: Option<SearchSummary>,
    /// Path of the JSON-lines trace of the winning restart, when one was written.
    pub trace_file: Option<String>,
    #[serde(skip)]
    pub trace: Option<SearchTrace>,
}

/// Runs `params.restarts` seeded local searches and keeps the lowest final `Φ` (ties: lowest
/// seed).
pub fn best_of_restarts(
    inst: &Instance,
    obj: &Objective,
    k: usize,
    params: &SolveParams,
) -> Result<(DepotSet, SearchTrace, SearchSummary)> {
    if params.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1".into()));
    }
    let seeds = params.seeds();
    let cfg = params.search_config();
    let runs = exec::map_collect(&seeds, params.parallelism, |&seed| {
        search::local_search(inst, obj, k, &Init::Random { seed }, &cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, (_, trace)) in runs.iter().enumerate() {
        if trace.final_phi < runs[best].1.final_phi {
            best = i;
        }
    }
    let restarts = runs
        .iter()
        .zip(&seeds)
        .map(|((_, tr), &seed)| RestartSummary {
            seed,
            initial_phi: tr.initial_phi,
            final_phi: tr.final_phi,
            iterations: tr.iterations,
            termination: tr.termination,
        })
        .collect();
    let summary = SearchSummary {
        objective: *obj,
        best_seed: seeds[best],
        restarts,
    };
    let (s, trace) = runs.into_iter().nth(best).expect("restarts >= 1");
    Ok((s, trace, summary))
}

struct Bounds {
    lb: f64,
    lb_depots: f64,
    lb_exhaustive: Option<f64>,
    certifies: bool,
}

fn bounds(inst: &Instance, k: usize, depots: &DepotSet, policy: Parallelism) -> Result<Bounds> {
    let lb_depots = routing::lower_bound(inst, depots)?;
    if inst.n() > EXHAUSTIVE_LB_MAX_N {
        return Ok(Bounds {
            lb: lb_depots,
            lb_depots,
            lb_exhaustive: None,
            certifies: false,
        });
    }
    let at_k = oracle::exhaustive_lower_bound(inst, k, policy)?.opt_value;
    // A plan with more than k depots is bounded by the optimum at its own depot count.
    let at_size = if depots.len() == k {
        at_k
    } else {
        oracle::exhaustive_lower_bound(inst, depots.len(), policy)?.opt_value
    };
    Ok(Bounds {
        lb: lb_depots.max(at_size),
        lb_depots,
        lb_exhaustive: Some(at_k),
        certifies: true,
    })
}

fn ratio(cost: f64, lb: f64) -> Option<f64> {
    (lb > 0.0).then(|| cost / lb)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    inst: &Instance,
    mode: Mode,
    k: usize,
    depots: DepotSet,
    report_obj: &Objective,
    route: bool,
    params: &SolveParams,
    search: Option<(SearchTrace, SearchSummary)>,
) -> Result<SolveResult> {
    let report = ObjectiveReport::evaluate(inst, &depots, report_obj.rho, report_obj.tree_metric)?;
    let (plan, b) = if route {
        let plan = routing::build_routes(inst, &depots)?;
        let b = bounds(inst, k, &depots, params.parallelism)?;
        (Some(plan), Some(b))
    } else {
        (None, None)
    };
    let cost = plan.as_ref().map(|p| p.total_cost);
    let (trace, summary) = match search {
        Some((t, s)) => (Some(t), Some(s)),
        None => (None, None),
    };
    Ok(SolveResult {
        mode,
        k,
        budget_factor: depots.len() as f64 / k as f64,
        depots,
        report,
        lb: b.as_ref().map(|b| b.lb),
        lb_depots: b.as_ref().map(|b| b.lb_depots),
        lb_exhaustive: b.as_ref().and_then(|b| b.lb_exhaustive),
        lb_certifies_optimum: b.as_ref().is_some_and(|b| b.certifies),
        ratio: cost.zip(b.as_ref()).and_then(|(c, b)| ratio(c, b.lb)),
        ratio_exhaustive: cost
            .zip(b.as_ref().and_then(|b| b.lb_exhaustive))
            .and_then(|(c, lb)| ratio(c, lb)),
        plan,
        params: *params,
        search: summary,
        trace_file: None,
        trace,
    })
}

/// Whether unsplit routing is possible: `Q` is set and no demand exceeds it.
pub fn routable(inst: &Instance) -> bool {
    inst.capacity()
        .is_some_and(|q| routing::check_demands(inst, q).is_ok())
}

fn routing_precheck(inst: &Instance) -> Result<f64> {
    let capacity = inst.require_capacity()?;
    routing::check_demands(inst, capacity)?;
    Ok(capacity)
}

/// k-LocVRP through k-median-forest local search with `ρ = Q/2`, then routing.
pub fn solve_klocvrp(inst: &Instance, params: &SolveParams) -> Result<SolveResult> {
    let capacity = routing_precheck(inst)?;
    let obj = Objective::new(capacity / 2.0, Which::D);
    let k = inst.k();
    let (s, trace, summary) = best_of_restarts(inst, &obj, k, params)?;
    assemble(inst, Mode::Locvrp, k, s, &obj, true, params, Some((trace, summary)))
}

/// Opens `S_med ∪ S_mst` (k-median local optimum and optimal k-tree), at most `2k` depots.
pub fn solve_bicriteria(inst: &Instance, params: &SolveParams) -> Result<SolveResult> {
    let capacity = routing_precheck(inst)?;
    let k = inst.k();
    let (s_med, trace, summary) = best_of_restarts(inst, &Objective::k_median(), k, params)?;
    let s_mst = mst::ktree_opt(inst, k, Which::D)?;
    let depots = s_med.union(&s_mst);
    let report_obj = Objective::new(capacity / 2.0, Which::D);
    assemble(inst, Mode::Bicriteria, k, depots, &report_obj, true, params, Some((trace, summary)))
}

/// k-median-forest local search for an arbitrary objective; routes when [`routable`].
pub fn solve_kmf(inst: &Instance, obj: &Objective, params: &SolveParams) -> Result<SolveResult> {
    solve_search_mode(inst, Mode::Kmf, obj, params)
}

/// Weighted k-median local search (`ρ = 0`); routes when [`routable`].
pub fn solve_kmedian(inst: &Instance, params: &SolveParams) -> Result<SolveResult> {
    solve_search_mode(inst, Mode::Kmedian, &Objective::k_median(), params)
}

fn solve_search_mode(inst: &Instance, mode: Mode, obj: &Objective, params: &SolveParams) -> Result<SolveResult> {
    let route = routable(inst);
    let k = inst.k();
    let (s, trace, summary) = best_of_restarts(inst, obj, k, params)?;
    assemble(inst, mode, k, s, obj, route, params, Some((trace, summary)))
}

/// Optimal k-tree in `obj.tree_metric`; `obj` is only used for the report.
pub fn solve_ktree(inst: &Instance, obj: &Objective, params: &SolveParams) -> Result<SolveResult> {
    obj.check(inst)?;
    let route = routable(inst);
    let k = inst.k();
    let s = mst::ktree_opt(inst, k, obj.tree_metric)?;
    assemble(inst, Mode::Ktree, k, s, obj, route, params, None)
}

/// Dispatch on `mode`; `obj` applies to the `kmf` and `ktree` modes.
pub fn solve(inst: &Instance, mode: Mode, obj: &Objective, params: &SolveParams) -> Result<SolveResult> {
    match mode {
        Mode::Locvrp => solve_klocvrp(inst, params),
        Mode::Kmf => solve_kmf(inst, obj, params),
        Mode::Kmedian => solve_kmedian(inst, params),
        Mode::Ktree => solve_ktree(inst, obj, params),
        Mode::Bicriteria => solve_bicriteria(inst, params),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum VerifyIssue {
    DepotOutOfRange { vertex: usize },
    BudgetExceeded { size: usize, budget: usize },
    PlanDepotsDiffer,
    Plan { issue: routing::PlanIssue },
    MissingPlan,
    ReportMismatch { field: String, stated: f64, actual: f64 },
    RoutingBoundExceeded { cost: f64, bound: f64 },
    LowerBoundAboveCost { lb: f64, cost: f64 },
    LowerBoundMismatch { field: String, stated: f64, actual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub issues: Vec<VerifyIssue>,
    pub total_cost: Option<f64>,
    pub lb: Option<f64>,
    pub ratio: Option<f64>,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= routing::ROUTE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Re-derives every number in `result` from `inst` and checks the plan.
pub fn verify_result(inst: &Instance, result: &SolveResult, policy: Parallelism) -> Result<VerifyReport> {
    let mut issues = Vec::new();
    let n = inst.n();
    if let Some(&v) = result.depots.members().iter().find(|&&v| v >= n) {
        issues.push(VerifyIssue::DepotOutOfRange { vertex: v });
        return Ok(VerifyReport {
            passed: false,
            issues,
            total_cost: None,
            lb: None,
            ratio: None,
        });
    }
    let budget = match result.mode {
        Mode::Bicriteria => 2 * inst.k(),
        _ => inst.k(),
    };
    if result.depots.len() > budget || result.depots.is_empty() {
        issues.push(VerifyIssue::BudgetExceeded {
            size: result.depots.len(),
            budget,
        });
    }

    let r = &result.report;
    let actual = ObjectiveReport::evaluate(inst, &result.depots, r.rho, r.tree_metric)?;
    let pairs = [
        ("med", r.med, actual.med),
        ("tree_d", r.tree_d, actual.tree_d),
        ("tree_c", r.tree_c, actual.tree_c),
        ("phi", r.phi, actual.phi),
        ("flow", r.flow.unwrap_or(f64::NAN), actual.flow.unwrap_or(f64::NAN)),
    ];
    for (field, stated, actual) in pairs {
        if !(near(stated, actual) || (stated.is_nan() && actual.is_nan())) {
            issues.push(VerifyIssue::ReportMismatch {
                field: field.into(),
                stated,
                actual,
            });
        }
    }

    let routed = matches!(result.mode, Mode::Locvrp | Mode::Bicriteria) || routable(inst);
    let mut cost = None;
    let mut lb = None;
    match (&result.plan, routed) {
        (None, true) => issues.push(VerifyIssue::MissingPlan),
        (None, false) => {}
        (Some(plan), _) => {
            if plan.depots != result.depots {
                issues.push(VerifyIssue::PlanDepotsDiffer);
            }
            let pr = routing::validate_plan(inst, plan);
            issues.extend(pr.issues.into_iter().map(|issue| VerifyIssue::Plan { issue }));
            let total = plan.trips.iter().map(|t| t.length).sum::<f64>();
            let bound = routing::routing_bound(inst, &result.depots)?;
            if total > bound + routing::ROUTE_TOL + 1e-12 * bound {
                issues.push(VerifyIssue::RoutingBoundExceeded { cost: total, bound });
            }
            let b = bounds(inst, inst.k(), &result.depots, policy)?;
            for (field, stated, actual) in [
                ("lb", result.lb, Some(b.lb)),
                ("lb_depots", result.lb_depots, Some(b.lb_depots)),
                ("lb_exhaustive", result.lb_exhaustive, b.lb_exhaustive),
            ] {
                let ok = match (stated, actual) {
                    (Some(s), Some(a)) => near(s, a),
                    (None, None) => true,
                    _ => false,
                };
                if !ok {
                    issues.push(VerifyIssue::LowerBoundMismatch {
                        field: field.into(),
                        stated: stated.unwrap_or(f64::NAN),
                        actual: actual.unwrap_or(f64::NAN),
                    });
                }
            }
            if b.lb > total + routing::ROUTE_TOL * total.max(1.0) {
                issues.push(VerifyIssue::LowerBoundAboveCost { lb: b.lb, cost: total });
            }
            cost = Some(total);
            lb = Some(b.lb);
        }
    }
    Ok(VerifyReport {
        passed: issues.is_empty(),
        issues,
        total_cost: cost,
        lb,
        ratio: cost.zip(lb).and_then(|(c, l)| ratio(c, l)),
    })
}
