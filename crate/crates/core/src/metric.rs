//! Instances, depot sets and the `Med` / `Flow` cost functions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mst;

/// Absolute tolerance used by metric validation.
pub const METRIC_TOL: f64 = 1e-9;

/// Selects the primary metric `d` or the secondary metric `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    #[default]
    D,
    C,
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::D => "d",
            Which::C => "c",
        })
    }
}

/// Dense symmetric distance matrix.
///
/// The Kruskal edge order (weight, then lexicographic endpoints) is computed lazily once and
/// shared by every spanning-tree computation on this matrix.
#[derive(Debug, Clone)]
pub struct Metric {
    n: usize,
    data: Vec<f64>,
    edge_order: OnceLock<Vec<(u32, u32)>>,
}

impl PartialEq for Metric {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.data == other.data
    }
}

impl Metric {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(Self::from_flat(n, data))
    }

    /// Builds a matrix from `f(i, j)` evaluated on every ordered pair.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::from_flat(n, data)
    }

    /// Euclidean distances between planar points, rounded to a 1e-12 grid.
    pub fn euclidean(points: &[[f64; 2]]) -> Self {
        Self::from_fn(points.len(), |i, j| {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            ((dx * dx + dy * dy).sqrt() * 1e12).round() / 1e12
        })
    }

    fn from_flat(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self {
            n,
            data,
            edge_order: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Returns a copy with every entry multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_flat(self.n, self.data.iter().map(|x| x * alpha).collect())
    }

    /// All unordered pairs `i < j` sorted by (weight, min endpoint, max endpoint).
    pub fn edge_order(&self) -> &[(u32, u32)] {
        self.edge_order.get_or_init(|| {
            let mut edges = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
            for i in 0..self.n {
                for j in i + 1..self.n {
                    edges.push((i as u32, j as u32));
                }
            }
            edges.sort_by(|&(a, b), &(c, d)| {
                self.get(a as usize, b as usize)
                    .total_cmp(&self.get(c as usize, d as usize))
                    .then((a, b).cmp(&(c, d)))
            });
            edges
        })
    }
}

/// A k-LocVRP / k-median-forest instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    labels: Option<Vec<String>>,
    q: Vec<f64>,
    capacity: Option<f64>,
    k: usize,
    d: Metric,
    c: Option<Metric>,
    annotations: BTreeMap<String, serde_json::Value>,
}

impl Instance {
    /// Creates an instance over metric `d` with demands `q` and depot budget `k`.
    ///
    /// Only shapes are checked here; metric properties are reported by [`Instance::validate`].
    pub fn new(d: Metric, q: Vec<f64>, k: usize) -> Result<Self> {
        if q.len() != d.n() {
            return Err(Error::InvalidParameter(format!(
                "{} demands for {} vertices",
                q.len(),
                d.n()
            )));
        }
        if d.n() == 0 {
            return Err(Error::InvalidParameter("instance has no vertices".into()));
        }
        Ok(Self {
            labels: None,
            q,
            capacity: None,
            k,
            d,
            c: None,
            annotations: BTreeMap::new(),
        })
    }

    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn without_capacity(mut self) -> Self {
        self.capacity = None;
        self
    }

    pub fn with_secondary(mut self, c: Metric) -> Result<Self> {
        if c.n() != self.n() {
            return Err(Error::InvalidParameter(format!(
                "secondary metric has {} vertices, expected {}",
                c.n(),
                self.n()
            )));
        }
        self.c = Some(c);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.n()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_annotation(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.annotations.insert(key.to_string(), value.into());
        self
    }

    pub fn n(&self) -> usize {
        self.d.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn demands(&self) -> &[f64] {
        &self.q
    }

    pub fn demand(&self, u: usize) -> f64 {
        self.q[u]
    }

    pub fn capacity(&self) -> Option<f64> {
        self.capacity
    }

    /// Capacity `Q`, or [`Error::MissingCapacity`].
    pub fn require_capacity(&self) -> Result<f64> {
        self.capacity.ok_or(Error::MissingCapacity)
    }

    pub fn d(&self) -> &Metric {
        &self.d
    }

    pub fn c(&self) -> Option<&Metric> {
        self.c.as_ref()
    }

    /// The requested metric; `c` falls back to `d` when the instance is uniform.
    pub fn metric(&self, which: Which) -> &Metric {
        match which {
            Which::D => &self.d,
            Which::C => self.c.as_ref().unwrap_or(&self.d),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of `u`, or its index as a string.
    pub fn label(&self, u: usize) -> String {
        self.labels
            .as_ref()
            .map(|l| l[u].clone())
            .unwrap_or_else(|| u.to_string())
    }

    /// Index of the vertex carrying `label`.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|l| l == label)
    }

    pub fn annotations(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.annotations
    }

    pub fn annotation_f64(&self, key: &str) -> Option<f64> {
        self.annotations.get(key).and_then(|v| v.as_f64())
    }

    /// Builds a depot set from vertex labels.
    pub fn depot_set_by_labels(&self, labels: &[&str]) -> Result<DepotSet> {
        let members = labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown vertex label {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        DepotSet::new(members, self.n())
    }

    /// Reports every violated instance invariant; never fails.
    pub fn validate(&self) -> ValidationReport {
        validate_instance(self)
    }
}

/// A duplicate-free, sorted set of depot vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DepotSet(Vec<usize>);

impl DepotSet {
    pub fn new(mut members: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&v) = members.iter().find(|&&v| v >= n) {
            return Err(Error::VertexOutOfRange { vertex: v, n });
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self(members))
    }

    /// Every vertex of an `n`-vertex instance.
    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub(crate) fn from_sorted(members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Self(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn check_budget(&self, budget: usize) -> Result<()> {
        if self.len() > budget {
            return Err(Error::BudgetExceeded {
                size: self.len(),
                budget,
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &DepotSet) -> DepotSet {
        let mut m: Vec<usize> = self.0.iter().chain(&other.0).copied().collect();
        m.sort_unstable();
        m.dedup();
        DepotSet(m)
    }

    /// Size of the symmetric difference.
    pub fn symmetric_difference_len(&self, other: &DepotSet) -> usize {
        let common = self.0.iter().filter(|v| other.contains(**v)).count();
        self.len() + other.len() - 2 * common
    }

    pub(crate) fn non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDepotSet)
        } else {
            Ok(())
        }
    }
}

/// Every cost component of a depot set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub med: f64,
    /// `(2/Q)·med`; absent when the instance has no capacity.
    pub flow: Option<f64>,
    pub tree_d: f64,
    pub tree_c: f64,
    pub rho: f64,
    pub tree_metric: Which,
    /// `med + rho·tree` with the tree measured in `tree_metric`.
    pub phi: f64,
}

impl ObjectiveReport {
    pub fn evaluate(inst: &Instance, s: &DepotSet, rho: f64, tree_metric: Which) -> Result<Self> {
        let med = med_cost(inst, s)?;
        let flow = inst.capacity().map(|q| flow_from_med(med, q));
        let tree_d = mst::contracted_mst(inst, s, Which::D)?.cost;
        let tree_c = if inst.c().is_some() {
            mst::contracted_mst(inst, s, Which::C)?.cost
        } else {
            tree_d
        };
        let tree = match tree_metric {
            Which::D => tree_d,
            Which::C => tree_c,
        };
        Ok(Self {
            med,
            flow,
            tree_d,
            tree_c,
            rho,
            tree_metric,
            phi: med + rho * tree,
        })
    }
}

/// `d(u, S)` (or `c(u, S)`).
pub fn dist_to_set(inst: &Instance, u: usize, s: &DepotSet, which: Which) -> Result<f64> {
    s.non_empty()?;
    Ok(nearest_in(inst.metric(which), u, s.members()).1)
}

/// Nearest member of `set` to `u` (lowest index on ties) and its distance.
pub(crate) fn nearest_in(m: &Metric, u: usize, set: &[usize]) -> (usize, f64) {
    let row = m.row(u);
    let mut best = (set[0], row[set[0]]);
    for &w in &set[1..] {
        if row[w] < best.1 {
            best = (w, row[w]);
        }
    }
    best
}

/// `Med(S) = Σ_u q_u·d(u,S)`.
pub fn med_cost(inst: &Instance, s: &DepotSet) -> Result<f64> {
    s.non_empty()?;
    Ok(med_unchecked(inst, s.members()))
}

pub(crate) fn med_unchecked(inst: &Instance, set: &[usize]) -> f64 {
    (0..inst.n())
        .map(|u| {
            let q = inst.q[u];
            if q == 0.0 {
                0.0
            } else {
                q * nearest_in(&inst.d, u, set).1
            }
        })
        .sum()
}

/// `Flow(S) = (2/Q)·Med(S)`.
pub fn flow_cost(inst: &Instance, s: &DepotSet) -> Result<f64> {
    let q = inst.require_capacity()?;
    Ok(flow_from_med(med_cost(inst, s)?, q))
}

pub(crate) fn flow_from_med(med: f64, capacity: f64) -> f64 {
    2.0 * med / capacity
}

/// One violated instance invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonFinite { which: Which, i: usize, j: usize },
    NonzeroDiagonal { which: Which, i: usize, value: f64 },
    Negative { which: Which, i: usize, j: usize, value: f64 },
    Asymmetric { which: Which, i: usize, j: usize },
    /// `m(a,c) > m(a,b) + m(b,c)`.
    Triangle { which: Which, a: usize, b: usize, c: usize, direct: f64, via: f64 },
    NegativeDemand { vertex: usize, demand: f64 },
    DemandExceedsCapacity { vertex: usize, demand: f64, capacity: f64 },
    NonPositiveCapacity { capacity: f64 },
    BudgetOutOfRange { k: usize, n: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { which, i, j } => write!(f, "{which}({i},{j}) is not finite"),
            Violation::NonzeroDiagonal { which, i, value } => {
                write!(f, "{which}({i},{i}) = {value} is not zero")
            }
            Violation::Negative { which, i, j, value } => {
                write!(f, "{which}({i},{j}) = {value} is negative")
            }
            Violation::Asymmetric { which, i, j } => {
                write!(f, "{which}({i},{j}) != {which}({j},{i})")
            }
            Violation::Triangle { which, a, b, c, direct, via } => write!(
                f,
                "triangle inequality violated for ({a},{b},{c}): {which}({a},{c}) = {direct} > {via}"
            ),
            Violation::NegativeDemand { vertex, demand } => {
                write!(f, "demand q_{vertex} = {demand} is negative")
            }
            Violation::DemandExceedsCapacity { vertex, demand, capacity } => {
                write!(f, "demand q_{vertex} = {demand} exceeds capacity {capacity}")
            }
            Violation::NonPositiveCapacity { capacity } => {
                write!(f, "capacity {capacity} is not positive")
            }
            Violation::BudgetOutOfRange { k, n } => write!(f, "k = {k} outside 1..={n}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Informational findings that do not invalidate the instance.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = inst.n();
    if inst.k == 0 || inst.k > n {
        report
            .violations
            .push(Violation::BudgetOutOfRange { k: inst.k, n });
    }
    for (u, &q) in inst.q.iter().enumerate() {
        if q.is_nan() || q < 0.0 {
            report
                .violations
                .push(Violation::NegativeDemand { vertex: u, demand: q });
        }
    }
    if let Some(cap) = inst.capacity {
        if cap.is_nan() || cap <= 0.0 {
            report
                .violations
                .push(Violation::NonPositiveCapacity { capacity: cap });
        }
        for (u, &q) in inst.q.iter().enumerate() {
            if q > cap {
                report.violations.push(Violation::DemandExceedsCapacity {
                    vertex: u,
                    demand: q,
                    capacity: cap,
                });
            }
        }
    }
    validate_metric(&inst.d, Which::D, &mut report);
    if let Some(c) = &inst.c {
        validate_metric(c, Which::C, &mut report);
    }
    report
}

fn validate_metric(m: &Metric, which: Which, report: &mut ValidationReport) {
    let n = m.n();
    let before = report.violations.len();
    let mut zero_pairs = 0usize;
    for i in 0..n {
        let v = m.get(i, i);
        if !v.is_finite() {
            report.violations.push(Violation::NonFinite { which, i, j: i });
        } else if v.abs() > METRIC_TOL {
            report
                .violations
                .push(Violation::NonzeroDiagonal { which, i, value: v });
        }
        for j in i + 1..n {
            let (a, b) = (m.get(i, j), m.get(j, i));
            if !a.is_finite() || !b.is_finite() {
                report.violations.push(Violation::NonFinite { which, i, j });
                continue;
            }
            if a < -METRIC_TOL {
                report
                    .violations
                    .push(Violation::Negative { which, i, j, value: a });
            }
            if (a - b).abs() > METRIC_TOL {
                report.violations.push(Violation::Asymmetric { which, i, j });
            }
            if a == 0.0 {
                zero_pairs += 1;
            }
        }
    }
    if report.violations.len() > before {
        // Triangle checks are meaningless on a malformed matrix.
        return;
    }
    for a in 0..n {
        for c in a + 1..n {
            let direct = m.get(a, c);
            for b in 0..n {
                if b == a || b == c {
                    continue;
                }
                let via = m.get(a, b) + m.get(b, c);
                if direct > via + METRIC_TOL {
                    report.violations.push(Violation::Triangle {
                        which,
                        a,
                        b,
                        c,
                        direct,
                        via,
                    });
                }
            }
        }
    }
    if zero_pairs > 0 {
        report.notes.push(format!(
            "metric {which} has {zero_pairs} zero off-diagonal pairs (pseudometric)"
        ));
    }
}

/// A pair of edges breaking `d_e <= d_f ⇒ c_e <= c_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyWitness {
    pub e: (usize, usize),
    pub f: (usize, usize),
    pub d_e: f64,
    pub d_f: f64,
    pub c_e: f64,
    pub c_f: f64,
}

/// Checks that `c` orders edges consistently with `d`.
///
/// Only strict `d` order constrains `c`; edges tied in `d` may be ordered arbitrarily by `c`.
/// Returns `Ok(None)` when consistent and a witnessing pair otherwise.
pub fn consistency_check(inst: &Instance) -> Result<Option<ConsistencyWitness>> {
    let c = inst.c().ok_or(Error::UniformInstance)?;
    let d = inst.d();
    let n = inst.n();
    let mut edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    edges.sort_by(|&(a, b), &(x, y)| d.get(a, b).total_cmp(&d.get(x, y)));

    // Max-c edge among all edges with strictly smaller d than the current group.
    let mut best_below: Option<(usize, usize)> = None;
    let mut start = 0;
    while start < edges.len() {
        let group_d = d.get(edges[start].0, edges[start].1);
        let end = start
            + edges[start..]
                .iter()
                .take_while(|&&(a, b)| d.get(a, b) == group_d)
                .count();
        if let Some(e) = best_below {
            let c_e = c.get(e.0, e.1);
            if let Some(&f) = edges[start..end]
                .iter()
                .find(|&&(a, b)| c.get(a, b) < c_e)
            {
                return Ok(Some(ConsistencyWitness {
                    e,
                    f,
                    d_e: d.get(e.0, e.1),
                    d_f: group_d,
                    c_e,
                    c_f: c.get(f.0, f.1),
                }));
            }
        }
        for &(a, b) in &edges[start..end] {
            if best_below.is_none_or(|e| c.get(a, b) > c.get(e.0, e.1)) {
                best_below = Some((a, b));
            }
        }
        start = end;
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Native JSON format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MetricFile {
    Matrix { rows: Vec<Vec<f64>> },
    Euclidean { points: Vec<[f64; 2]> },
}

impl MetricFile {
    fn into_metric(self) -> Result<Metric> {
        match self {
            MetricFile::Matrix { rows } => Metric::from_rows(rows),
            MetricFile::Euclidean { points } => Ok(Metric::euclidean(&points)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    k: usize,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
    q: Vec<f64>,
    d: MetricFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<MetricFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    annotations: BTreeMap<String, serde_json::Value>,
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let d = f.d.into_metric()?;
        if d.n() != f.n {
            return Err(Error::InvalidParameter(format!(
                "n = {} but metric d has {} vertices",
                f.n,
                d.n()
            )));
        }
        let mut inst = Instance::new(d, f.q, f.k)?;
        inst.capacity = f.capacity;
        if let Some(c) = f.c {
            inst = inst.with_secondary(c.into_metric()?)?;
        }
        if let Some(labels) = f.labels {
            inst = inst.with_labels(labels)?;
        }
        inst.annotations = f.annotations;
        Ok(inst)
    }
}

impl From<Instance> for InstanceFile {
    fn from(inst: Instance) -> Self {
        InstanceFile {
            n: inst.n(),
            k: inst.k,
            capacity: inst.capacity,
            q: inst.q,
            d: MetricFile::Matrix {
                rows: inst.d.rows(),
            },
            c: inst.c.map(|c| MetricFile::Matrix { rows: c.rows() }),
            labels: inst.labels,
            annotations: inst.annotations,
        }
    }
}
