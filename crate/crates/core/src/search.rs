//! Multi-swap local search for `Φ(S) = Σ_u q_u·d(u,S) + ρ·Tree(S)`.
//!
//! A `(D, A)` swap replaces `D ⊆ S` by `A ⊆ V∖S` with `|D| = |A| ≤ t`. The search uses the
//! first improving swap in a fixed lexicographic order and only accepts a swap when it lowers
//! `Φ` by at least a factor `1 + delta`, which bounds the number of iterations.

use std::io::Write;

use itertools::Itertools;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::metric::{self, DepotSet, Instance, Which};
use crate::mst;

/// Moves evaluated per parallel batch during a pivot scan.
const SCAN_BATCH: usize = 2048;

/// The k-median-forest objective family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub rho: f64,
    pub tree_metric: Which,
}

impl Objective {
    pub fn new(rho: f64, tree_metric: Which) -> Self {
        Self { rho, tree_metric }
    }

    /// Pure weighted k-median (`ρ = 0`).
    pub fn k_median() -> Self {
        Self::new(0.0, Which::D)
    }

    pub fn check(&self, inst: &Instance) -> Result<()> {
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rho = {} must be finite and nonnegative",
                self.rho
            )));
        }
        if self.tree_metric == Which::C && inst.c().is_none() {
            return Err(Error::UniformInstance);
        }
        Ok(())
    }
}

/// `Φ(S)` for the given objective.
pub fn phi(inst: &Instance, obj: &Objective, s: &DepotSet) -> Result<f64> {
    obj.check(inst)?;
    s.non_empty()?;
    Ok(phi_unchecked(inst, obj, s.members()))
}

pub(crate) fn phi_unchecked(inst: &Instance, obj: &Objective, set: &[usize]) -> f64 {
    let med = metric::med_unchecked(inst, set);
    if obj.rho == 0.0 {
        return med;
    }
    med + obj.rho * mst::contracted_cost(inst.metric(obj.tree_metric), set)
}

/// Replace `drop` (a subset of the current depots) by `add` (disjoint from them).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapMove {
    pub drop: Vec<usize>,
    pub add: Vec<usize>,
}

impl SwapMove {
    pub fn size(&self) -> usize {
        self.drop.len()
    }

    pub fn apply(&self, s: &DepotSet) -> DepotSet {
        DepotSet::from_sorted(apply_members(s.members(), self))
    }
}

fn apply_members(set: &[usize], mv: &SwapMove) -> Vec<usize> {
    let mut out: Vec<usize> = set
        .iter()
        .copied()
        .filter(|v| !mv.drop.contains(v))
        .chain(mv.add.iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// Every swap of size `1..=t`, ordered by size, then drop set, then add set (lexicographic).
pub fn enumerate_swaps(s: &DepotSet, n: usize, t: usize) -> impl Iterator<Item = SwapMove> + '_ {
    let outside: Vec<usize> = (0..n).filter(|&v| !s.contains(v)).collect();
    let max = t.min(s.len()).min(outside.len());
    (1..=max).flat_map(move |size| {
        let outside = outside.clone();
        s.members()
            .iter()
            .copied()
            .combinations(size)
            .flat_map(move |drop| {
                outside
                    .clone()
                    .into_iter()
                    .combinations(size)
                    .map(move |add| SwapMove {
                        drop: drop.clone(),
                        add,
                    })
            })
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `Σ_{s=1..t} C(k, s)·C(n−k, s)`.
pub fn swap_count(k: usize, n: usize, t: usize) -> u128 {
    (1..=t).map(|s| binomial(k, s) * binomial(n - k, s)).sum()
}

/// Uniform `k`-subset of `0..n` drawn from a SplitMix64 stream seeded with `seed`.
pub fn random_subset(n: usize, k: usize, seed: u64) -> DepotSet {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut members = rand::seq::index::sample(&mut rng, n, k).into_vec();
    members.sort_unstable();
    DepotSet::from_sorted(members)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Given(DepotSet),
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub t: usize,
    pub delta: f64,
    /// Overrides the default iteration bound.
    pub max_iters: Option<u64>,
    pub parallelism: Parallelism,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            t: 2,
            delta: 1e-7,
            max_iters: None,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: u64,
    #[serde(rename = "D")]
    pub drop: Vec<usize>,
    #[serde(rename = "A")]
    pub add: Vec<usize>,
    pub phi_before: f64,
    pub phi_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LocalOptimum,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub initial: DepotSet,
    pub seed: Option<u64>,
    pub t: usize,
    pub delta: f64,
    pub steps: Vec<TraceStep>,
    pub iterations: u64,
    pub iteration_cap: u64,
    pub termination: Termination,
    pub initial_phi: f64,
    pub final_phi: f64,
}

impl SearchTrace {
    /// One JSON object per accepted move.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for step in &self.steps {
            serde_json::to_writer(&mut out, step)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Smallest positive value `Φ` can take on this instance (a lower bound on it).
fn min_positive_phi(inst: &Instance, obj: &Objective) -> Option<f64> {
    let n = inst.n();
    let mut best = f64::INFINITY;
    for u in 0..n {
        let q = inst.demand(u);
        for (w, &dist) in inst.d().row(u).iter().enumerate() {
            let x = q * dist;
            if w != u && x > 0.0 && x < best {
                best = x;
            }
        }
    }
    if obj.rho > 0.0 {
        let m = inst.metric(obj.tree_metric);
        for u in 0..n {
            for w in u + 1..n {
                let x = obj.rho * m.get(u, w);
                if x > 0.0 && x < best {
                    best = x;
                }
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Default bound on accepted moves: `⌈ln(Φ_init/Φ_min⁺)/ln(1+δ)⌉ + 1`, capped by
/// `⌈10·n·k·ln(n+1)/δ⌉`.
pub fn default_iteration_cap(inst: &Instance, obj: &Objective, k: usize, delta: f64, initial_phi: f64) -> u64 {
    let n = inst.n() as f64;
    let hard = (10.0 * n * k as f64 * (n + 1.0).ln() / delta).ceil();
    let by_decrease = match min_positive_phi(inst, obj) {
        Some(lo) if initial_phi > 0.0 => {
            ((initial_phi / lo).ln().max(0.0) / delta.ln_1p()).ceil() + 1.0
        }
        _ => 0.0,
    };
    // `as` saturates on overflow.
    hard.min(by_decrease) as u64
}

/// Runs t-swap local search from `init` until no swap improves `Φ` by a factor `1 + delta`.
pub fn local_search(
    inst: &Instance,
    obj: &Objective,
    k: usize,
    init: &Init,
    cfg: &SearchConfig,
) -> Result<(DepotSet, SearchTrace)> {
    obj.check(inst)?;
    let n = inst.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={n}")));
    }
    if cfg.delta.is_nan() || cfg.delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta = {} must be positive", cfg.delta)));
    }
    if cfg.t == 0 {
        return Err(Error::InvalidParameter("t must be at least 1".into()));
    }
    let (mut current, seed) = match init {
        Init::Given(s) => {
            if s.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "initial depot set has {} members, expected {k}",
                    s.len()
                )));
            }
            if let Some(&v) = s.members().iter().find(|&&v| v >= n) {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
            (s.clone(), None)
        }
        Init::Random { seed } => (random_subset(n, k, *seed), Some(*seed)),
    };
    let initial = current.clone();
    let initial_phi = phi_unchecked(inst, obj, current.members());
    let cap = cfg
        .max_iters
        .unwrap_or_else(|| default_iteration_cap(inst, obj, k, cfg.delta, initial_phi));

    let mut value = initial_phi;
    let mut steps = Vec::new();
    let mut termination = Termination::LocalOptimum;
    loop {
        if steps.len() as u64 >= cap {
            termination = Termination::IterationCap;
            break;
        }
        let threshold = value / (1.0 + cfg.delta);
        let accept = |v: f64| v < value && v <= threshold;
        let Some((mv, next)) = first_move(inst, obj, &current, cfg.t, cfg.parallelism, accept)
        else {
            break;
        };
        steps.push(TraceStep {
            iteration: steps.len() as u64 + 1,
            drop: mv.drop.clone(),
            add: mv.add.clone(),
            phi_before: value,
            phi_after: next,
        });
        current = mv.apply(&current);
        value = next;
    }
    let trace = SearchTrace {
        initial,
        seed,
        t: cfg.t,
        delta: cfg.delta,
        iterations: steps.len() as u64,
        steps,
        iteration_cap: cap,
        termination,
        initial_phi,
        final_phi: value,
    };
    Ok((current, trace))
}

/// First swap in enumeration order whose new `Φ` satisfies `accept`, with that value.
fn first_move(
    inst: &Instance,
    obj: &Objective,
    current: &DepotSet,
    t: usize,
    policy: Parallelism,
    accept: impl Fn(f64) -> bool + Sync + Send,
) -> Option<(SwapMove, f64)> {
    let set = current.members();
    let mut moves = enumerate_swaps(current, inst.n(), t);
    loop {
        let mut batch: Vec<SwapMove> = moves.by_ref().take(SCAN_BATCH).collect();
        if batch.is_empty() {
            return None;
        }
        let hit = exec::position_first(&batch, policy, |mv| {
            accept(phi_unchecked(inst, obj, &apply_members(set, mv)))
        });
        if let Some(i) = hit {
            let v = phi_unchecked(inst, obj, &apply_members(set, &batch[i]));
            return Some((batch.swap_remove(i), v));
        }
    }
}

/// Result of an exhaustive local-optimality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOptCheck {
    pub is_local_opt: bool,
    pub phi: f64,
    /// First strictly improving swap, if any, with its `Φ`.
    pub improving: Option<(SwapMove, f64)>,
    pub moves_checked: u128,
}

/// True iff no swap of size `≤ t` strictly lowers `Φ` (exact comparison, no slack).
pub fn is_local_opt(
    inst: &Instance,
    obj: &Objective,
    s: &DepotSet,
    t: usize,
    policy: Parallelism,
) -> Result<LocalOptCheck> {
    let value = phi(inst, obj, s)?;
    let improving = first_move(inst, obj, s, t, policy, |v| v < value);
    Ok(LocalOptCheck {
        is_local_opt: improving.is_none(),
        phi: value,
        improving,
        moves_checked: swap_count(s.len(), inst.n(), t),
    })
}
