//! Kruskal spanning trees, contracted trees `MST(V/S)`, the optimal k-tree and shortcut tours.
//!
//! Ties between equal-weight edges are broken lexicographically on (min endpoint, max endpoint),
//! so every tree returned here is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{DepotSet, Instance, Metric, Which};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub edges: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum spanning tree of the sub-metric induced by `vertices`.
pub fn mst(metric: &Metric, vertices: &[usize]) -> SpanningTree {
    let n = metric.n();
    let mut inside = vec![false; n];
    for &v in vertices {
        inside[v] = true;
    }
    let target = vertices.len().saturating_sub(1);
    let mut dsu = DisjointSets::new(n);
    let mut edges = Vec::with_capacity(target);
    let mut cost = 0.0;
    for &(a, b) in metric.edge_order() {
        if edges.len() == target {
            break;
        }
        let (a, b) = (a as usize, b as usize);
        if inside[a] && inside[b] && dsu.union(a, b) {
            cost += metric.get(a, b);
            edges.push((a, b));
        }
    }
    SpanningTree { edges, cost }
}

/// `MST(V/S)` re-expanded over the original vertices.
///
/// Every component of `edges` holds exactly one depot; `attachment[v]` is that depot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractedTree {
    pub edges: Vec<(usize, usize)>,
    pub cost: f64,
    pub attachment: Vec<usize>,
    pub depots: DepotSet,
    pub metric: Which,
}

impl ContractedTree {
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.attachment.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Vertices whose component is rooted at depot `f`, ascending.
    pub fn component(&self, f: usize) -> Vec<usize> {
        (0..self.attachment.len())
            .filter(|&v| self.attachment[v] == f)
            .collect()
    }
}

/// `Tree(S)`: the minimum spanning tree after contracting `S` to one node.
pub fn contracted_mst(inst: &Instance, s: &DepotSet, which: Which) -> Result<ContractedTree> {
    s.non_empty()?;
    let metric = inst.metric(which);
    let (edges, cost) = contracted_edges(metric, s.members());
    let n = inst.n();

    let tree = ContractedTree {
        attachment: attach(n, &edges, s.members()),
        edges,
        cost,
        depots: s.clone(),
        metric: which,
    };
    Ok(tree)
}

/// Cost of `MST(V/S)` only; the hot path of objective evaluation.
pub(crate) fn contracted_cost(metric: &Metric, set: &[usize]) -> f64 {
    contracted_edges(metric, set).1
}

fn contracted_edges(metric: &Metric, set: &[usize]) -> (Vec<(usize, usize)>, f64) {
    let n = metric.n();
    let target = n - set.len();
    let mut dsu = DisjointSets::new(n);
    for w in set.windows(2) {
        dsu.union(w[0], w[1]);
    }
    let mut edges = Vec::with_capacity(target);
    let mut cost = 0.0;
    for &(a, b) in metric.edge_order() {
        if edges.len() == target {
            break;
        }
        let (a, b) = (a as usize, b as usize);
        if dsu.union(a, b) {
            cost += metric.get(a, b);
            edges.push((a, b));
        }
    }
    (edges, cost)
}

fn attach(n: usize, edges: &[(usize, usize)], depots: &[usize]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut attachment = vec![usize::MAX; n];
    for &f in depots {
        attachment[f] = f;
        let mut stack = vec![f];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if attachment[w] == usize::MAX {
                    attachment[w] = f;
                    stack.push(w);
                }
            }
        }
    }
    attachment
}

/// Depot set of size `k` minimising `Tree(S)`.
///
/// Keeps the first `n - k` Kruskal edges (the MST minus its `k - 1` heaviest edges) and names the
/// lowest-indexed vertex of each resulting component.
pub fn ktree_opt(inst: &Instance, k: usize, which: Which) -> Result<DepotSet> {
    let n = inst.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={n}")));
    }
    let metric = inst.metric(which);
    let mut dsu = DisjointSets::new(n);
    let mut kept = 0;
    for &(a, b) in metric.edge_order() {
        if kept == n - k {
            break;
        }
        if dsu.union(a as usize, b as usize) {
            kept += 1;
        }
    }
    let mut seen = vec![false; n];
    let mut reps = Vec::with_capacity(k);
    for v in 0..n {
        let r = dsu.find(v);
        if !seen[r] {
            seen[r] = true;
            reps.push(v);
        }
    }
    Ok(DepotSet::from_sorted(reps))
}

/// Depth-first preorder of the tree component containing `root`, children in index order.
pub(crate) fn preorder(adj: &[Vec<usize>], root: usize, mut keep: impl FnMut(usize) -> bool) -> Vec<usize> {
    let mut order = Vec::new();
    let mut visited = vec![false; adj.len()];
    let mut stack = vec![root];
    visited[root] = true;
    while let Some(v) = stack.pop() {
        if keep(v) {
            order.push(v);
        }
        for &w in adj[v].iter().rev() {
            if !visited[w] {
                visited[w] = true;
                stack.push(w);
            }
        }
    }
    order
}

/// Shortcut Euler tour of depot `f`'s component: each vertex listed at its first DFS visit.
pub fn euler_tour(tree: &ContractedTree, f: usize) -> Result<Vec<usize>> {
    if !tree.depots.contains(f) {
        return Err(Error::InvalidParameter(format!("vertex {f} is not a depot")));
    }
    Ok(preorder(&tree.adjacency(), f, |_| true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kit::{self, RandomKind};
    use crate::oracle::tests_support::{all_spanning_tree_costs, best_contracted_forest};
    use itertools::Itertools;

    fn line() -> Metric {
        let xs = [0.0f64, 1.0, 3.0];
        Metric::from_fn(3, |i, j| (xs[i] - xs[j]).abs())
    }

    #[test]
    fn mst_small_cases() {
        let m = line();
        let single = mst(&m, &[1]);
        assert!(single.edges.is_empty());
        assert_eq!(single.cost, 0.0);
        let t = mst(&m, &[0, 1, 2]);
        assert_eq!(t.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(t.cost, 3.0);
    }

    #[test]
    fn mst_matches_cayley_enumeration() {
        for seed in 0..5 {
            let inst = kit::gen_random(7, 1, seed, RandomKind::Euclidean).unwrap();
            let all: Vec<usize> = (0..7).collect();
            let best = all_spanning_tree_costs(inst.d(), &all)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            assert!((mst(inst.d(), &all).cost - best).abs() < 1e-12);
        }
    }

    #[test]
    fn contracted_full_set_is_empty() {
        let inst = kit::gen_random(5, 5, 1, RandomKind::Euclidean).unwrap();
        let t = contracted_mst(&inst, &DepotSet::all(5), Which::D).unwrap();
        assert!(t.edges.is_empty());
        assert_eq!(t.cost, 0.0);
        assert!(contracted_mst(&inst, &DepotSet::new(vec![], 5).unwrap(), Which::D).is_err());
    }

    #[test]
    fn contracted_appendix() {
        let inst = kit::gen_appendix(10).unwrap();
        let s = inst.depot_set_by_labels(&["u0", "u1", "v0", "v1"]).unwrap();
        let t = contracted_mst(&inst, &s, Which::D).unwrap();
        assert_eq!(t.cost, 110.0);
        let u2 = inst.index_of("u2").unwrap();
        let v2 = inst.index_of("v2").unwrap();
        assert_eq!(t.attachment[u2], inst.index_of("u1").unwrap());
        assert_eq!(t.attachment[v2], inst.index_of("v1").unwrap());
    }

    #[test]
    fn contracted_matches_forest_enumeration() {
        for seed in 0..4 {
            let inst = kit::gen_random(8, 3, 100 + seed, RandomKind::Euclidean).unwrap();
            for s in (0..8).combinations(3).step_by(7) {
                let set = DepotSet::new(s.clone(), 8).unwrap();
                let t = contracted_mst(&inst, &set, Which::D).unwrap();
                let brute = best_contracted_forest(inst.d(), &s);
                assert!((t.cost - brute).abs() < 1e-12, "{s:?}: {} vs {brute}", t.cost);
                check_structure(&t, inst.d(), 8);
            }
        }
    }

    #[test]
    fn contracted_equals_merged_node_mst() {
        // Auxiliary graph H': S merged into one node at distance min_{f∈S} d(f, v).
        for seed in 0..6 {
            let inst = kit::gen_random(8, 2, seed, RandomKind::ShortestPathCompletion).unwrap();
            let s = vec![1usize, 5];
            let others: Vec<usize> = (0..8).filter(|v| !s.contains(v)).collect();
            let m = others.len() + 1;
            let merged = Metric::from_fn(m, |i, j| {
                let pick = |x: usize| if x == 0 { None } else { Some(others[x - 1]) };
                match (pick(i), pick(j)) {
                    (None, None) => 0.0,
                    (None, Some(v)) | (Some(v), None) => {
                        s.iter().map(|&f| inst.d().get(f, v)).fold(f64::INFINITY, f64::min)
                    }
                    (Some(a), Some(b)) => inst.d().get(a, b),
                }
            });
            let all: Vec<usize> = (0..m).collect();
            let expected = mst(&merged, &all).cost;
            let t = contracted_mst(&inst, &DepotSet::new(s, 8).unwrap(), Which::D).unwrap();
            assert!((t.cost - expected).abs() < 1e-9);
        }
    }

    fn check_structure(t: &ContractedTree, m: &Metric, n: usize) {
        assert_eq!(t.edges.len(), n - t.depots.len());
        let mut dsu = DisjointSets::new(n);
        for &(a, b) in &t.edges {
            assert!(dsu.union(a, b), "cycle");
        }
        for v in 0..n {
            let f = t.attachment[v];
            assert!(t.depots.contains(f));
            assert_eq!(dsu.find(v), dsu.find(f));
        }
        let sum: f64 = t.edges.iter().map(|&(a, b)| m.get(a, b)).sum();
        assert!((sum - t.cost).abs() < 1e-12);
        for (i, &f) in t.depots.members().iter().enumerate() {
            for &g in &t.depots.members()[i + 1..] {
                assert_ne!(dsu.find(f), dsu.find(g));
            }
        }
    }

    #[test]
    fn ktree_examples() {
        let inst = kit::gen_random(6, 6, 3, RandomKind::Euclidean).unwrap();
        let s = ktree_opt(&inst, 6, Which::D).unwrap();
        assert_eq!(s, DepotSet::all(6));
        assert_eq!(contracted_mst(&inst, &s, Which::D).unwrap().cost, 0.0);

        let app = kit::gen_appendix(10).unwrap();
        let s = ktree_opt(&app, 4, Which::D).unwrap();
        assert_eq!(contracted_mst(&app, &s, Which::D).unwrap().cost, 110.0);
        let has = |l: &str| s.contains(app.index_of(l).unwrap());
        assert!(has("u0") && has("v0"));
        assert!(has("u1") ^ has("u2"));
        assert!(has("v1") ^ has("v2"));
    }

    #[test]
    fn ktree_is_exhaustively_optimal() {
        for seed in 0..12 {
            let n = 5 + (seed as usize % 6);
            let inst = kit::gen_random(n, 1, seed, RandomKind::Euclidean).unwrap();
            let mut prev = f64::INFINITY;
            for k in 1..=4.min(n) {
                let s = ktree_opt(&inst, k, Which::D).unwrap();
                assert_eq!(s.len(), k);
                let got = contracted_mst(&inst, &s, Which::D).unwrap().cost;
                let best = (0..n)
                    .combinations(k)
                    .map(|c| contracted_cost(inst.d(), &c))
                    .fold(f64::INFINITY, f64::min);
                assert!((got - best).abs() < 1e-12, "n={n} k={k}");
                assert!(got <= prev);
                prev = got;
            }
        }
    }

    #[test]
    fn euler_tour_cases() {
        let inst = kit::gen_random(4, 4, 0, RandomKind::Euclidean).unwrap();
        let t = contracted_mst(&inst, &DepotSet::all(4), Which::D).unwrap();
        assert_eq!(euler_tour(&t, 2).unwrap(), vec![2]);

        // Star rooted at a=0 with leaves b=1, c=2.
        let star = Metric::from_rows(vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 2.0],
            vec![1.0, 2.0, 0.0],
        ])
        .unwrap();
        let inst = Instance::new(star, vec![0.0, 1.0, 1.0], 1).unwrap();
        let t = contracted_mst(&inst, &DepotSet::new(vec![0], 3).unwrap(), Which::D).unwrap();
        assert_eq!(euler_tour(&t, 0).unwrap(), vec![0, 1, 2]);
        assert!(euler_tour(&t, 1).is_err());
    }

    #[test]
    fn euler_tour_shortcut_length() {
        for seed in 0..20 {
            let inst = kit::gen_random(6, 1, seed, RandomKind::ShortestPathCompletion).unwrap();
            let t = contracted_mst(&inst, &DepotSet::new(vec![0], 6).unwrap(), Which::D).unwrap();
            let tour = euler_tour(&t, 0).unwrap();
            let mut sorted = tour.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
            let closed: f64 = tour
                .iter()
                .chain(std::iter::once(&0))
                .tuple_windows()
                .map(|(&a, &b)| inst.d().get(a, b))
                .sum();
            assert!(closed <= 2.0 * t.cost + 1e-9);
        }
    }

    #[test]
    fn tree_monotone_under_inclusion() {
        for seed in 0..10 {
            let inst = kit::gen_random(9, 1, seed, RandomKind::Euclidean).unwrap();
            let small = DepotSet::new(vec![0, 4], 9).unwrap();
            let big = DepotSet::new(vec![0, 4, 7], 9).unwrap();
            assert!(
                contracted_mst(&inst, &big, Which::D).unwrap().cost
                    <= contracted_mst(&inst, &small, Which::D).unwrap().cost
            );
        }
    }
}
