//! Instance generators and file formats.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Instance, Metric};

/// Six-vertex instance `[u0, u1, u2, v0, v1, v2]` on which the optimal k-median, k-tree and
/// k-median-forest (`ρ = ℓ²`) depot sets are pairwise disjoint.
///
/// Distances between the two groups are unbounded in the construction; here they are `ℓ⁷`,
/// which exceeds every objective value of interest (at most `2ℓ⁵`) by a factor `ℓ²`.
pub fn gen_appendix(ell: u32) -> Result<Instance> {
    if ell < 2 {
        return Err(Error::InvalidParameter(format!("ell = {ell} must be at least 2")));
    }
    let l = ell as f64;
    let far = l.powi(7);
    // Within-group distances: hub-to-leaf and leaf-to-leaf.
    let groups = [(l.powi(3), l.powi(2)), (l.powi(4), l)];
    let d = Metric::from_fn(6, |i, j| {
        if i == j {
            return 0.0;
        }
        let (gi, gj) = (i / 3, j / 3);
        if gi != gj {
            return far;
        }
        let (hub_leaf, leaf_leaf) = groups[gi];
        if i % 3 == 0 || j % 3 == 0 {
            hub_leaf
        } else {
            leaf_leaf
        }
    });
    let heavy = l.powi(4);
    let q = vec![1.0, heavy, heavy, 1.0, heavy, heavy];
    let labels = ["u0", "u1", "u2", "v0", "v1", "v2"].map(String::from).to_vec();
    Ok(Instance::new(d, q, 4)?
        .with_labels(labels)?
        .with_annotation("generator", "appendix")
        .with_annotation("ell", ell)
        .with_annotation("rho", l * l)
        .with_annotation("infinite_distance", far))
}

/// Non-uniform instance on `u_{i,j}`, `i ∈ 1..=k`, `j ∈ {1,2}` (index `2(i-1) + (j-1)`) whose
/// local optimum `{u_{i,2}}` is `w` times worse than the optimum `{u_{i,1}}` under swaps of
/// size up to `k - 1`, with objective `ρ = 1` and the tree measured in `c`.
pub fn gen_gap(k: usize, w: f64, big_m: f64) -> Result<Instance> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} must be at least 2")));
    }
    if !(w > 1.0 && big_m > w) {
        return Err(Error::InvalidParameter(format!(
            "need M > w > 1, got w = {w}, M = {big_m}"
        )));
    }
    let n = 2 * k;
    let pair = |v: usize| (v / 2, v % 2); // (i - 1, j - 1)
    let d = Metric::from_fn(n, |x, y| {
        let ((ix, jx), (iy, jy)) = (pair(x), pair(y));
        let linked = (jx == 1 && jy == 0 && iy == ix + 1) || (jy == 1 && jx == 0 && ix == iy + 1);
        if x == y || linked {
            0.0
        } else {
            1.0
        }
    });
    let c = Metric::from_fn(n, |x, y| if x / 2 == y / 2 { 0.0 } else { big_m });
    let mut q = vec![w; n];
    q[n - 1] = 1.0;
    let labels = (0..n)
        .map(|v| format!("u{},{}", v / 2 + 1, v % 2 + 1))
        .collect();
    Ok(Instance::new(d, q, k)?
        .with_secondary(c)?
        .with_labels(labels)?
        .with_annotation("generator", "gap")
        .with_annotation("w", w)
        .with_annotation("M", big_m)
        .with_annotation("rho", 1.0)
        .with_annotation("tree_metric", "c"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomKind {
    /// Uniform points in the unit square.
    Euclidean,
    /// Random connected weighted graph closed under shortest paths.
    ShortestPathCompletion,
}

/// Seeded random instance: integer demands in `[1, 5]`, `Q = 2·max q`, budget `min(k, n)`.
pub fn gen_random(n: usize, k: usize, seed: u64, kind: RandomKind) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let d = match kind {
        RandomKind::Euclidean => {
            let points: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            Metric::euclidean(&points)
        }
        RandomKind::ShortestPathCompletion => {
            let mut w = vec![vec![f64::INFINITY; n]; n];
            for (i, row) in w.iter_mut().enumerate() {
                row[i] = 0.0;
            }
            let connect = |w: &mut Vec<Vec<f64>>, a: usize, b: usize, len: f64| {
                w[a][b] = len;
                w[b][a] = len;
            };
            for v in 1..n {
                let u = rng.random_range(0..v);
                let len = rng.random_range(0.1..1.0);
                connect(&mut w, u, v, len);
            }
            for a in 0..n {
                for b in a + 1..n {
                    if w[a][b].is_infinite() && rng.random_bool(0.3) {
                        let len = rng.random_range(0.1..1.0);
                        connect(&mut w, a, b, len);
                    }
                }
            }
            for m in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let via = w[a][m] + w[m][b];
                        if via < w[a][b] {
                            w[a][b] = via;
                        }
                    }
                }
            }
            Metric::from_rows(w)?
        }
    };
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5u32) as f64).collect();
    let capacity = 2.0 * q.iter().cloned().fold(0.0, f64::max);
    Ok(Instance::new(d, q, k.clamp(1, n))?
        .with_capacity(capacity)
        .with_annotation("generator", "random")
        .with_annotation("seed", seed))
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("column {}: {e}", e.column()),
    })
}

pub fn instance_to_json(inst: &Instance) -> Result<String> {
    let mut s = serde_json::to_string_pretty(inst)?;
    s.push('\n');
    Ok(s)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &Instance) -> Result<()> {
    fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}

pub fn import_tsplib_cvrp(path: impl AsRef<Path>) -> Result<Instance> {
    parse_tsplib_cvrp(&fs::read_to_string(path)?)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Coords,
    Demands,
    Depots,
    Weights,
}

/// TSPLIB nearest-integer rounding.
fn nint(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Parses the CVRP subset of TSPLIB (`EUC_2D`, or `EXPLICIT` with `FULL_MATRIX`).
///
/// The fixed depot of the file is kept only as the `tsplib_depots` annotation. The budget `k`
/// comes from `VEHICLES`, else a `-k<N>` suffix of `NAME`, else 1.
pub fn parse_tsplib_cvrp(text: &str) -> Result<Instance> {
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let mut name = None;
    let mut dimension = None;
    let mut capacity = None;
    let mut vehicles = None;
    let mut weight_type = None;
    let mut weight_format = None;
    let mut coords: Vec<Option<[f64; 2]>> = Vec::new();
    let mut demands: Vec<Option<f64>> = Vec::new();
    let mut depots = Vec::new();
    let mut weights = Vec::new();
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        match upper.as_str() {
            "NODE_COORD_SECTION" | "DEMAND_SECTION" | "DEPOT_SECTION" | "EDGE_WEIGHT_SECTION" => {
                let n = dimension
                    .ok_or_else(|| parse_err(line_no, "section before DIMENSION".into()))?;
                section = match upper.as_str() {
                    "NODE_COORD_SECTION" => {
                        coords = vec![None; n];
                        Section::Coords
                    }
                    "DEMAND_SECTION" => {
                        demands = vec![None; n];
                        Section::Demands
                    }
                    "DEPOT_SECTION" => Section::Depots,
                    _ => Section::Weights,
                };
                continue;
            }
            "EOF" => break,
            _ => {}
        }
        if let Some((key, value)) = line.split_once(':') {
            if !key.trim().contains(char::is_whitespace) {
                section = Section::Header;
                let value = value.trim().to_string();
                let number = |v: &str| {
                    v.parse::<f64>()
                        .map_err(|_| parse_err(line_no, format!("{} is not a number: {v}", key.trim())))
                };
                match key.trim().to_ascii_uppercase().as_str() {
                    "NAME" => name = Some(value),
                    "DIMENSION" => dimension = Some(number(&value)? as usize),
                    "CAPACITY" => capacity = Some(number(&value)?),
                    "VEHICLES" => vehicles = Some(number(&value)? as usize),
                    "EDGE_WEIGHT_TYPE" => weight_type = Some(value.to_ascii_uppercase()),
                    "EDGE_WEIGHT_FORMAT" => weight_format = Some(value.to_ascii_uppercase()),
                    _ => {}
                }
                continue;
            }
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let nums = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("expected a number, found {f}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let node = |id: f64, len: usize| -> Result<usize> {
            if id.fract() != 0.0 || id < 1.0 || id as usize > len {
                return Err(parse_err(line_no, format!("node id {id} outside 1..={len}")));
            }
            Ok(id as usize - 1)
        };
        match section {
            Section::Header => {
                return Err(parse_err(line_no, format!("unexpected line: {line}")));
            }
            Section::Coords => {
                if nums.len() < 3 {
                    return Err(parse_err(line_no, "coordinate line needs id x y".into()));
                }
                let v = node(nums[0], coords.len())?;
                coords[v] = Some([nums[1], nums[2]]);
            }
            Section::Demands => {
                if nums.len() != 2 {
                    return Err(parse_err(line_no, "demand line needs id q".into()));
                }
                let v = node(nums[0], demands.len())?;
                demands[v] = Some(nums[1]);
            }
            Section::Depots => {
                for &x in &nums {
                    if x == -1.0 {
                        section = Section::Header;
                        break;
                    }
                    depots.push(node(x, dimension.unwrap_or(0))?);
                }
            }
            Section::Weights => weights.extend(nums),
        }
    }

    let n = dimension.ok_or_else(|| parse_err(0, "missing DIMENSION".into()))?;
    let capacity = capacity.ok_or_else(|| parse_err(0, "missing CAPACITY".into()))?;
    let weight_type = weight_type.unwrap_or_else(|| "EUC_2D".into());
    let d = match weight_type.as_str() {
        "EUC_2D" => {
            let pts = coords
                .iter()
                .enumerate()
                .map(|(i, p)| p.ok_or_else(|| parse_err(0, format!("node {} has no coordinates", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            if pts.len() != n {
                return Err(parse_err(0, "missing NODE_COORD_SECTION".into()));
            }
            Metric::from_fn(n, |i, j| {
                let (dx, dy) = (pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
                nint((dx * dx + dy * dy).sqrt())
            })
        }
        "EXPLICIT" => {
            let format = weight_format.unwrap_or_default();
            if format != "FULL_MATRIX" {
                return Err(Error::UnsupportedEdgeWeightType(format!("EXPLICIT/{format}")));
            }
            if weights.len() != n * n {
                return Err(parse_err(
                    0,
                    format!("EDGE_WEIGHT_SECTION has {} entries, expected {}", weights.len(), n * n),
                ));
            }
            Metric::from_fn(n, |i, j| weights[i * n + j])
        }
        other => return Err(Error::UnsupportedEdgeWeightType(other.into())),
    };
    let q = if demands.is_empty() {
        vec![0.0; n]
    } else {
        demands
            .iter()
            .enumerate()
            .map(|(i, q)| q.ok_or_else(|| parse_err(0, format!("node {} has no demand", i + 1))))
            .collect::<Result<Vec<_>>>()?
    };
    let from_name = name.as_deref().and_then(|s| {
        let pos = s.rfind("-k")?;
        s[pos + 2..].parse::<usize>().ok()
    });
    let k = vehicles.or(from_name).unwrap_or(1).clamp(1, n);
    let mut inst = Instance::new(d, q, k)?
        .with_capacity(capacity)
        .with_annotation("tsplib_depots", depots)
        .with_annotation("tsplib_edge_weight_type", weight_type);
    if let Some(name) = name {
        inst = inst.with_annotation("tsplib_name", name);
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_subset_opt, OracleObjective};
    use crate::Parallelism;

    #[test]
    fn appendix_small_ell() {
        let inst = gen_appendix(2).unwrap();
        let at = |a: &str, b: &str| inst.d().get(inst.index_of(a).unwrap(), inst.index_of(b).unwrap());
        assert_eq!(at("u1", "u2"), 4.0);
        assert_eq!(at("v1", "v2"), 2.0);
        assert_eq!(at("u0", "v2"), 128.0);
        assert_eq!(at("u0", "u1"), 8.0);
        assert_eq!(at("v0", "v2"), 16.0);
        assert!(gen_appendix(1).is_err());
    }

    #[test]
    fn appendix_is_metric_for_all_ell() {
        for ell in 2..12 {
            let inst = gen_appendix(ell).unwrap();
            assert!(inst.validate().is_valid(), "ell = {ell}");
        }
    }

    #[test]
    fn appendix_median_opt() {
        let inst = gen_appendix(10).unwrap();
        let r = brute_subset_opt(&inst, 4, &OracleObjective::Median, Parallelism::Sequential).unwrap();
        assert_eq!(r.opt_value, 11_000.0);
    }

    #[test]
    fn gap_shape_and_values() {
        let inst = gen_gap(3, 100.0, 1e6).unwrap();
        assert_eq!(inst.n(), 6);
        assert_eq!(inst.demands(), &[100.0, 100.0, 100.0, 100.0, 100.0, 1.0]);
        let u = |i: usize, j: usize| 2 * (i - 1) + (j - 1);
        assert_eq!(inst.d().get(u(1, 2), u(2, 1)), 0.0);
        assert_eq!(inst.d().get(u(2, 2), u(3, 1)), 0.0);
        assert_eq!(inst.d().get(u(3, 2), u(1, 1)), 1.0);
        assert_eq!(inst.d().get(u(1, 1), u(1, 2)), 1.0);
        let c = inst.c().unwrap();
        assert_eq!(c.get(u(2, 1), u(2, 2)), 0.0);
        assert_eq!(c.get(u(1, 2), u(2, 1)), 1e6);
        assert_eq!(inst.label(u(3, 2)), "u3,2");
        assert!(gen_gap(1, 100.0, 1e6).is_err());
        assert!(gen_gap(3, 100.0, 50.0).is_err());
        assert!(gen_gap(3, 1.0, 50.0).is_err());
    }

    #[test]
    fn gap_validates_and_is_inconsistent() {
        for k in 2..7 {
            let inst = gen_gap(k, 100.0, 1e6).unwrap();
            assert!(inst.validate().is_valid());
            assert!(crate::metric::consistency_check(&inst).unwrap().is_some());
        }
    }

    #[test]
    fn random_instances() {
        let one = gen_random(1, 3, 0, RandomKind::Euclidean).unwrap();
        assert_eq!(one.n(), 1);
        assert_eq!(one.k(), 1);
        for kind in [RandomKind::Euclidean, RandomKind::ShortestPathCompletion] {
            for seed in 0..10 {
                let inst = gen_random(12, 3, seed, kind).unwrap();
                assert!(inst.validate().is_valid(), "{kind:?} {seed}");
                assert!(inst.demands().iter().all(|&q| (1.0..=5.0).contains(&q) && q.fract() == 0.0));
                let maxq = inst.demands().iter().cloned().fold(0.0, f64::max);
                assert_eq!(inst.capacity(), Some(2.0 * maxq));
                let a = instance_to_json(&inst).unwrap();
                let b = instance_to_json(&gen_random(12, 3, seed, kind).unwrap()).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = gen_random(8, 2, 77, RandomKind::Euclidean).unwrap();
        write_instance(&path, &inst).unwrap();
        assert_eq!(read_instance(&path).unwrap(), inst);
        let gap = gen_gap(3, 100.0, 1e6).unwrap();
        write_instance(&path, &gap).unwrap();
        assert_eq!(read_instance(&path).unwrap(), gap);
    }

    #[test]
    fn malformed_json_has_position() {
        let err = parse_instance("{\n  \"n\": 2,\n  oops\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    const TINY: &str = "NAME : tiny-n3-k2
COMMENT : hand made
TYPE : CVRP
DIMENSION : 3
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 10
NODE_COORD_SECTION
1 0 0
2 3 4
3 1 1
DEMAND_SECTION
1 0
2 4
3 6
DEPOT_SECTION
1
-1
EOF
";

    #[test]
    fn tsplib_euc2d() {
        let inst = parse_tsplib_cvrp(TINY).unwrap();
        // sqrt(25) = 5, sqrt(2) ≈ 1.414 → 1, sqrt(13) ≈ 3.606 → 4.
        assert_eq!(
            inst.d().rows(),
            vec![vec![0.0, 5.0, 1.0], vec![5.0, 0.0, 4.0], vec![1.0, 4.0, 0.0]]
        );
        assert_eq!(inst.demands(), &[0.0, 4.0, 6.0]);
        assert_eq!(inst.capacity(), Some(10.0));
        assert_eq!(inst.k(), 2);
        assert_eq!(inst.annotations()["tsplib_depots"], serde_json::json!([0]));
    }

    #[test]
    fn tsplib_explicit_and_errors() {
        let explicit = "NAME : m\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EXPLICIT\nEDGE_WEIGHT_FORMAT : FULL_MATRIX\nCAPACITY : 5\nVEHICLES : 1\nEDGE_WEIGHT_SECTION\n0 7\n7 0\nDEMAND_SECTION\n1 0\n2 3\nEOF\n";
        let inst = parse_tsplib_cvrp(explicit).unwrap();
        assert_eq!(inst.d().get(0, 1), 7.0);

        let geo = TINY.replace("EUC_2D", "GEO");
        assert!(matches!(
            parse_tsplib_cvrp(&geo),
            Err(Error::UnsupportedEdgeWeightType(t)) if t == "GEO"
        ));
        let bad = TINY.replace("2 3 4", "2 3 x");
        assert!(matches!(parse_tsplib_cvrp(&bad), Err(Error::Parse { line: 9, .. })));
        let out_of_range = TINY.replace("3 1 1", "4 1 1");
        assert!(matches!(parse_tsplib_cvrp(&out_of_range), Err(Error::Parse { line: 10, .. })));
    }
}
