use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtl-scuc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = run(&["solve", "--case", s(&data("cases/toy1.json")), "--variant", "base", "--forecast", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["manifest.json", "metrics.json", "solution.json"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "Optimal");
    assert!((manifest["objective"].as_f64().unwrap() - 24_000.0).abs() < 1e-6);
    assert_eq!(manifest["case_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn solve_reads_scenario_files_and_dumps_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = run(&[
        "solve",
        "--case",
        s(&data("cases/oracle_3bus_vtl.json")),
        "--variant",
        "vtl",
        "--scenarios",
        s(&data("scenarios/oracle_3bus_vtl.json")),
        "--out",
        s(&out),
        "--dump-model",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dump = fs::read_to_string(out.join("model.txt")).unwrap();
    assert!(dump.contains("[VTL]"));
}

#[test]
fn infeasible_case_exits_two_and_names_the_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--case", s(&data("cases/infeasible.json")), "--forecast", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("BALANCE"), "{}", stderr(&o));
}

#[test]
fn missing_case_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--case", "/does/not/exist.json", "--forecast", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scenario_source_is_required_and_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("cases/toy1.json");
    let none = run(&["solve", "--case", s(&case), "--out", s(dir.path())]);
    assert_ne!(none.status.code(), Some(0));
    let both = run(&["solve", "--case", s(&case), "--forecast", "--generate", "2", "--out", s(dir.path())]);
    assert_ne!(both.status.code(), Some(0));
}

#[test]
fn compare_same_variant_twice_gives_identical_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--case",
        s(&data("cases/oracle_3bus_stoch.json")),
        "--scenarios",
        s(&data("scenarios/oracle_3bus_stoch.json")),
        "--variants",
        "base,base",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cost_payment.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<_> = line.split(',').collect();
        assert_eq!(cells[1], cells[2], "{line}");
    }
    assert!(dir.path().join("runs/base_2/solution.json").exists());
}

#[test]
fn failed_variant_leaves_na_cells() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--case",
        s(&data("cases/toy1.json")),
        "--forecast",
        "--variants",
        "base,vtl",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cost_payment.csv")).unwrap();
    assert!(csv.contains("100.00%,NA"), "{csv}");
}

#[test]
fn gen_scenarios_keeps_probabilities_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("cases/oracle_3bus_stoch.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&[
            "gen-scenarios",
            "--case",
            s(&case),
            "--count",
            "3",
            "--seed",
            "7",
            "--probs",
            "0.25,0.35,0.40",
            "--out",
            s(out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&text).unwrap();
    assert_eq!(v["probabilities"], serde_json::json!([0.25, 0.35, 0.40]));
    let o = run(&["validate", "--case", s(&case), "--scenarios", s(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn report_reproduces_compare_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cmp = dir.path().join("cmp");
    let o = run(&[
        "compare",
        "--case",
        s(&data("cases/oracle_storage.json")),
        "--scenarios",
        s(&data("scenarios/oracle_storage.json")),
        "--out",
        s(&cmp),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = dir.path().join("rep");
    let runs: Vec<PathBuf> = ["base", "pt", "bess", "vtl"].iter().map(|v| cmp.join("runs").join(v)).collect();
    let mut args = vec!["report", "--baseline", "base", "--out", s(&rep), "--runs"];
    args.extend(runs.iter().map(|p| s(p)));
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["cost_payment.csv", "congestion.csv", "curtailment.csv", "branch_loading.csv"] {
        assert_eq!(fs::read(cmp.join(f)).unwrap(), fs::read(rep.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_rejects_corrupted_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = run(&["solve", "--case", s(&data("cases/toy1.json")), "--forecast", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let path = out.join("solution.json");
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    v["unexpected"] = serde_json::json!(1);
    fs::write(&path, v.to_string()).unwrap();
    let o = run(&["report", "--runs", s(&out), "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));

    fs::write(&path, "{ truncated").unwrap();
    let o = run(&["report", "--runs", s(&out), "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_flags_broken_cases() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(data("cases/toy1.json")).unwrap()).unwrap();
    v["thermal_gens"][0]["p_min_mw"] = serde_json::json!(500.0);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, v.to_string()).unwrap();
    let o = run(&["validate", "--case", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("g1"), "{}", stderr(&o));
    let o = run(&["validate", "--case", s(&data("cases/toy1.json"))]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn repeated_solves_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut objectives = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "solve",
            "--case",
            s(&data("cases/oracle_storage.json")),
            "--variant",
            "vtl",
            "--generate",
            "2",
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["seed"], 3);
        objectives.push(m["objective"].as_f64().unwrap());
        let a = fs::read(out.join("solution.json")).unwrap();
        let b = fs::read(dir.path().join("a/solution.json")).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(objectives[0], objectives[1]);
}

#[test]
fn unknown_backend_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--solver", "cplex", "solve", "--case", s(&data("cases/toy1.json")), "--forecast", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
