use medforest::kit::{self, RandomKind};
use medforest::pipeline::{self, SolveParams, SolveResult};
use medforest::routing::{self, validate_plan};
use medforest::search::{self, Init, SearchTrace};
use medforest::{DepotSet, Objective, Parallelism, SearchConfig, Which};

#[test]
fn solve_result_json_round_trip() {
    let inst = kit::gen_random(10, 3, 4, RandomKind::Euclidean).unwrap();
    let r = pipeline::solve_klocvrp(&inst, &SolveParams::default()).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: SolveResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back.depots, r.depots);
    assert_eq!(back.plan, r.plan);
    assert_eq!(back.report, r.report);
    assert!(pipeline::verify_result(&inst, &back, Parallelism::Sequential).unwrap().passed);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["depots", "plan", "report", "lb", "ratio", "params"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    for key in ["depots", "trips", "total_cost", "lower_bound"] {
        assert!(v["plan"].get(key).is_some(), "{key}");
    }
}

#[test]
fn trace_lines_parse_back() {
    let inst = kit::gen_random(12, 3, 8, RandomKind::ShortestPathCompletion).unwrap();
    let obj = Objective::new(1.0, Which::D);
    let (_, trace): (DepotSet, SearchTrace) =
        search::local_search(&inst, &obj, 3, &Init::Random { seed: 1 }, &SearchConfig::default()).unwrap();
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len() as u64, trace.iterations);
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["iteration"], i as u64 + 1);
        assert!(line["phi_after"].as_f64() < line["phi_before"].as_f64());
        assert_eq!(line["D"].as_array().unwrap().len(), line["A"].as_array().unwrap().len());
    }
}

#[test]
fn routes_from_every_budget() {
    let inst = kit::gen_random(25, 1, 3, RandomKind::Euclidean).unwrap();
    for size in 1..=25 {
        let s = search::random_subset(25, size, size as u64);
        let plan = routing::build_routes(&inst, &s).unwrap();
        assert!(validate_plan(&inst, &plan).is_valid());
        assert!(plan.total_cost <= routing::routing_bound(&inst, &s).unwrap() + 1e-9);
    }
}

#[test]
fn instances_survive_files() {
    let dir = tempfile::tempdir().unwrap();
    for (i, inst) in [
        kit::gen_appendix(10).unwrap(),
        kit::gen_gap(4, 100.0, 1e6).unwrap(),
        kit::gen_random(15, 4, 2, RandomKind::ShortestPathCompletion).unwrap(),
    ]
    .into_iter()
    .enumerate()
    {
        let path = dir.path().join(format!("{i}.json"));
        kit::write_instance(&path, &inst).unwrap();
        assert_eq!(kit::read_instance(&path).unwrap(), inst);
    }
}
