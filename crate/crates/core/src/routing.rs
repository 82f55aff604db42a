//! Unsplit-delivery vehicle routes for a fixed depot set.
//!
//! Routes are cut from the contracted spanning tree `MST(V/S)`. Each depot's component is
//! partitioned bottom-up into edge-disjoint connected groups; every group except the one that
//! contains the depot carries load in `(Q/2, Q]`. A group is served by one trip that leaves the
//! depot nearest to the group, walks the group's subtree and returns. The walk costs at most
//! twice the group's tree edges and the round trip to the nearest depot costs at most
//! `(4/Q)·Σ q_u·d(u,S)` over the group, so the plan stays within `2·Flow(S) + 2·Tree(S)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{self, DepotSet, Instance, Which};
use crate::mst::{self, ContractedTree};

/// Absolute slack on the routing bound and on recomputed lengths.
pub const ROUTE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub depot: usize,
    pub stops: Vec<usize>,
    pub load: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub depots: DepotSet,
    pub trips: Vec<Trip>,
    pub total_cost: f64,
    pub lower_bound: f64,
}

/// Closed tour length `depot → stops… → depot`.
pub fn trip_length(inst: &Instance, depot: usize, stops: &[usize]) -> f64 {
    let d = inst.d();
    let Some((&first, &last)) = stops.first().zip(stops.last()) else {
        return 0.0;
    };
    d.get(depot, first) + stops.windows(2).map(|w| d.get(w[0], w[1])).sum::<f64>() + d.get(last, depot)
}

/// `max{Flow(S), Tree(S)}`, a lower bound on any (even split-delivery) routing with depots `S`.
pub fn lower_bound(inst: &Instance, s: &DepotSet) -> Result<f64> {
    let flow = metric::flow_cost(inst, s)?;
    let tree = mst::contracted_mst(inst, s, Which::D)?.cost;
    Ok(flow.max(tree))
}

/// `2·Flow(S) + 2·Tree(S)`.
pub fn routing_bound(inst: &Instance, s: &DepotSet) -> Result<f64> {
    let flow = metric::flow_cost(inst, s)?;
    let tree = mst::contracted_mst(inst, s, Which::D)?.cost;
    Ok(2.0 * flow + 2.0 * tree)
}

pub(crate) fn check_demands(inst: &Instance, capacity: f64) -> Result<()> {
    if capacity.is_nan() || capacity <= 0.0 {
        return Err(Error::InvalidParameter(format!("capacity {capacity} is not positive")));
    }
    for (u, &q) in inst.demands().iter().enumerate() {
        if q.is_nan() || q < 0.0 {
            return Err(Error::InvalidParameter(format!("demand q_{u} = {q} is negative")));
        }
        if q > capacity {
            return Err(Error::UnsplitInfeasible {
                vertex: u,
                demand: q,
                capacity,
            });
        }
    }
    Ok(())
}

/// A connected vertex set of one tree component and the vertices it delivers to.
#[derive(Debug, Default)]
struct Group {
    vertices: Vec<usize>,
    delivered: Vec<usize>,
    load: f64,
}

impl Group {
    fn hub(v: usize) -> Self {
        Group {
            vertices: vec![v],
            ..Default::default()
        }
    }

    fn absorb(&mut self, other: Group) {
        self.vertices.extend(other.vertices);
        self.delivered.extend(other.delivered);
        self.load += other.load;
    }
}

/// Splits depot `f`'s component into groups (see module docs). Groups are emitted in post-order.
fn partition_component(inst: &Instance, adj: &[Vec<usize>], f: usize, capacity: f64, out: &mut Vec<Group>) {
    let half = capacity / 2.0;
    // Preorder with parent links; reversed, it visits children before parents.
    let mut order = Vec::new();
    let mut parent = vec![usize::MAX; adj.len()];
    let mut stack = vec![f];
    parent[f] = f;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in adj[v].iter().rev() {
            if parent[w] == usize::MAX {
                parent[w] = v;
                stack.push(w);
            }
        }
    }
    let mut residual: Vec<Option<Group>> = (0..adj.len()).map(|_| None).collect();
    for &v in order.iter().rev() {
        let mut bin = Group::hub(v);
        let q = inst.demand(v);
        if v != f && q > 0.0 {
            if q > half {
                out.push(Group {
                    vertices: vec![v],
                    delivered: vec![v],
                    load: q,
                });
            } else {
                bin.delivered.push(v);
                bin.load = q;
            }
        }
        for &c in &adj[v] {
            if parent[c] != v || c == f {
                continue;
            }
            let r = residual[c].take().expect("child processed before parent");
            if r.load == 0.0 {
                continue;
            }
            bin.absorb(r);
            if bin.load > half {
                out.push(std::mem::replace(&mut bin, Group::hub(v)));
            }
        }
        residual[v] = Some(bin);
    }
    let root = residual[f].take().expect("root processed");
    if root.load > 0.0 {
        out.push(root);
    }
}

/// Trip serving `group`: from the depot nearest to the group, through a shortcut walk of the
/// group's subtree starting at its vertex closest to the depot set.
fn group_trip(inst: &Instance, adj: &[Vec<usize>], s: &DepotSet, group: &Group) -> Trip {
    let d = inst.d();
    let (mut entry, mut depot, mut best) = (usize::MAX, usize::MAX, f64::INFINITY);
    let mut members = group.vertices.clone();
    members.sort_unstable();
    for &u in &members {
        let (g, dist) = metric::nearest_in(d, u, s.members());
        if dist < best {
            (entry, depot, best) = (u, g, dist);
        }
    }
    let mut deliver = vec![false; adj.len()];
    for &u in &group.delivered {
        deliver[u] = true;
    }
    let mut stops = Vec::with_capacity(group.delivered.len());
    let mut visited = vec![false; adj.len()];
    let mut stack = vec![entry];
    visited[entry] = true;
    while let Some(v) = stack.pop() {
        if deliver[v] {
            stops.push(v);
        }
        for &w in adj[v].iter().rev() {
            if !visited[w] && members.binary_search(&w).is_ok() {
                visited[w] = true;
                stack.push(w);
            }
        }
    }
    debug_assert_eq!(stops.len(), group.delivered.len());
    let load = stops.iter().map(|&u| inst.demand(u)).sum();
    let length = trip_length(inst, depot, &stops);
    Trip {
        depot,
        stops,
        load,
        length,
    }
}

/// Builds unsplit routes for depots `S` with cost at most `2·Flow(S) + 2·Tree(S)`.
///
/// The bound is checked at runtime; a violation is reported as [`Error::BoundViolated`].
pub fn build_routes(inst: &Instance, s: &DepotSet) -> Result<RoutePlan> {
    s.non_empty()?;
    let capacity = inst.require_capacity()?;
    check_demands(inst, capacity)?;
    let tree = mst::contracted_mst(inst, s, Which::D)?;
    build_from_tree(inst, s, &tree, capacity)
}

fn build_from_tree(inst: &Instance, s: &DepotSet, tree: &ContractedTree, capacity: f64) -> Result<RoutePlan> {
    let adj = tree.adjacency();
    let mut groups = Vec::new();
    for &f in s.members() {
        partition_component(inst, &adj, f, capacity, &mut groups);
    }
    let mut trips: Vec<Trip> = groups
        .iter()
        .map(|g| group_trip(inst, &adj, s, g))
        .collect();
    trips.sort_by_key(|t| t.depot);

    let total_cost: f64 = trips.iter().map(|t| t.length).sum();
    let flow = metric::flow_cost(inst, s)?;
    let bound = 2.0 * flow + 2.0 * tree.cost;
    if total_cost > bound + ROUTE_TOL + 1e-12 * bound {
        return Err(Error::BoundViolated {
            cost: total_cost,
            bound,
        });
    }
    Ok(RoutePlan {
        depots: s.clone(),
        trips,
        total_cost,
        lower_bound: flow.max(tree.cost),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanIssue {
    VertexOutOfRange { vertex: usize },
    DepotNotInSet { trip: usize, depot: usize },
    EmptyTrip { trip: usize },
    StopIsDepot { trip: usize, vertex: usize },
    OverCapacity { trip: usize, load: f64, capacity: f64 },
    LoadMismatch { trip: usize, stated: f64, actual: f64 },
    LengthMismatch { trip: usize, stated: f64, actual: f64 },
    TotalMismatch { stated: f64, actual: f64 },
    Uncovered { vertex: usize },
    Duplicated { vertex: usize, visits: usize },
    ZeroDemandStop { trip: usize, vertex: usize },
    MissingCapacity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub issues: Vec<PlanIssue>,
    pub total_cost: f64,
    pub lower_bound: Option<f64>,
    /// `total_cost / lower_bound` when the bound is positive.
    pub ratio: Option<f64>,
}

impl PlanReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ROUTE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Checks coverage, capacity, depot membership and length arithmetic of `plan`.
pub fn validate_plan(inst: &Instance, plan: &RoutePlan) -> PlanReport {
    let n = inst.n();
    let mut issues = Vec::new();
    let capacity = inst.capacity();
    if capacity.is_none() {
        issues.push(PlanIssue::MissingCapacity);
    }
    let mut visits = vec![0usize; n];
    let mut actual_total = 0.0;
    for (i, trip) in plan.trips.iter().enumerate() {
        if trip.depot >= n || trip.stops.iter().any(|&u| u >= n) {
            let vertex = std::iter::once(trip.depot)
                .chain(trip.stops.iter().copied())
                .find(|&u| u >= n)
                .unwrap_or(trip.depot);
            issues.push(PlanIssue::VertexOutOfRange { vertex });
            continue;
        }
        if !plan.depots.contains(trip.depot) {
            issues.push(PlanIssue::DepotNotInSet {
                trip: i,
                depot: trip.depot,
            });
        }
        if trip.stops.is_empty() {
            issues.push(PlanIssue::EmptyTrip { trip: i });
        }
        for &u in &trip.stops {
            visits[u] += 1;
            if plan.depots.contains(u) {
                issues.push(PlanIssue::StopIsDepot { trip: i, vertex: u });
            } else if inst.demand(u) == 0.0 {
                issues.push(PlanIssue::ZeroDemandStop { trip: i, vertex: u });
            }
        }
        let load: f64 = trip.stops.iter().map(|&u| inst.demand(u)).sum();
        if !close(load, trip.load) {
            issues.push(PlanIssue::LoadMismatch {
                trip: i,
                stated: trip.load,
                actual: load,
            });
        }
        if let Some(cap) = capacity {
            if load > cap + ROUTE_TOL {
                issues.push(PlanIssue::OverCapacity {
                    trip: i,
                    load,
                    capacity: cap,
                });
            }
        }
        let length = trip_length(inst, trip.depot, &trip.stops);
        if !close(length, trip.length) {
            issues.push(PlanIssue::LengthMismatch {
                trip: i,
                stated: trip.length,
                actual: length,
            });
        }
        actual_total += length;
    }
    if !close(actual_total, plan.total_cost) {
        issues.push(PlanIssue::TotalMismatch {
            stated: plan.total_cost,
            actual: actual_total,
        });
    }
    for (u, &count) in visits.iter().enumerate() {
        let needs = inst.demand(u) > 0.0 && !plan.depots.contains(u);
        if needs && count == 0 {
            issues.push(PlanIssue::Uncovered { vertex: u });
        }
        if count > 1 {
            issues.push(PlanIssue::Duplicated { vertex: u, visits: count });
        }
    }
    let lb = if plan.depots.is_empty() || plan.depots.members().iter().any(|&f| f >= n) {
        None
    } else {
        lower_bound(inst, &plan.depots).ok()
    };
    PlanReport {
        ratio: lb.filter(|&b| b > 0.0).map(|b| actual_total / b),
        issues,
        total_cost: actual_total,
        lower_bound: lb,
    }
}
