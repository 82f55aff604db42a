use std::path::Path;
use std::process::{Command, Output};

fn medforest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medforest"))
        .args(args)
        .current_dir(dir)
        .env_remove("MEDFOREST_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn appendix_median_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    assert!(medforest(dir.path(), &["gen", "--kind", "appendix", "--ell", "10", "--out", "a.json"]).status.success());
    let out = medforest(dir.path(), &["oracle", "--instance", "a.json", "--objective", "median"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["opt_value"], 11000.0);
    assert_eq!(v["argmins"], serde_json::json!([[1, 2, 4, 5]]));
    let out = medforest(dir.path(), &["oracle", "--instance", "a.json", "--objective", "kmf"]);
    assert_eq!(json(&out)["opt_value"], 202000.0);
}

#[test]
fn solve_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(medforest(d, &["gen", "--kind", "random", "--n", "14", "--k", "3", "--seed", "2", "--out", "r.json"]).status.success());
    for mode in ["locvrp", "bicriteria", "kmedian", "kmf", "ktree"] {
        let out = medforest(d, &["solve", "--instance", "r.json", "--mode", mode, "--restarts", "3", "--out", "s.json"]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
        let out = medforest(d, &["verify", "--instance", "r.json", "--result", "s.json"]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stdout));
        assert_eq!(json(&out)["passed"], true);
    }
}

#[test]
fn tampered_result_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    medforest(d, &["gen", "--kind", "random", "--n", "9", "--k", "2", "--out", "r.json"]);
    medforest(d, &["solve", "--instance", "r.json", "--mode", "locvrp", "--out", "s.json"]);
    let mut result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    result["plan"]["trips"].as_array_mut().unwrap().pop();
    std::fs::write(d.join("bad.json"), result.to_string()).unwrap();
    let out = medforest(d, &["verify", "--instance", "r.json", "--result", "bad.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["passed"], false);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(medforest(d, &["solve", "--mode", "nonsense"]).status.code(), Some(1));
    assert_eq!(medforest(d, &["oracle", "--instance", "missing.json", "--objective", "median"]).status.code(), Some(2));
    std::fs::write(d.join("broken.json"), "{ \"n\": ").unwrap();
    let out = medforest(d, &["solve", "--instance", "broken.json", "--mode", "kmedian"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    medforest(d, &["gen", "--kind", "random", "--n", "40", "--k", "10", "--out", "big.json"]);
    assert_eq!(medforest(d, &["oracle", "--instance", "big.json", "--objective", "median"]).status.code(), Some(3));
    // Swaps of size k can always reach the optimum, so the gap construction must fail.
    assert_eq!(medforest(d, &["gap-demo", "--k", "3", "--t", "3"]).status.code(), Some(4));
    std::fs::write(d.join("geo.vrp"), "NAME : g\nDIMENSION : 1\nEDGE_WEIGHT_TYPE : GEO\nCAPACITY : 1\nEOF\n").unwrap();
    let out = medforest(d, &["import-tsplib", "--in", "geo.vrp"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("GEO"));
}

#[test]
fn gap_demo_reports_ratio_w() {
    let dir = tempfile::tempdir().unwrap();
    let out = medforest(dir.path(), &["gap-demo", "--k", "4", "--w", "100", "--M", "1e6", "--t", "3"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["ratio"], 100.0);
    assert_eq!(v["phi_s_star"], 1.0);
    assert_eq!(v["consistent"], false);
}

#[test]
fn thread_env_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    medforest(d, &["gen", "--kind", "random", "--n", "12", "--k", "3", "--seed", "9", "--out", "r.json"]);
    let a = medforest(d, &["--threads", "2", "solve", "--instance", "r.json", "--mode", "locvrp"]);
    let b = Command::new(env!("CARGO_BIN_EXE_medforest"))
        .args(["solve", "--instance", "r.json", "--mode", "locvrp"])
        .current_dir(d)
        .env("MEDFOREST_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
