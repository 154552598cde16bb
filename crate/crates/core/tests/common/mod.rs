#![allow(dead_code)]

use std::path::PathBuf;

use vtl_scuc::{CaseFile, ScenarioSet};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn case(name: &str) -> CaseFile {
    CaseFile::load(data_dir().join("cases").join(format!("{name}.json"))).expect("bundled case loads")
}

/// Bundled scenario file when present, else the deterministic forecast.
pub fn scenarios(name: &str) -> ScenarioSet {
    let path = data_dir().join("scenarios").join(format!("{name}.json"));
    if path.exists() {
        ScenarioSet::load(path).expect("bundled scenarios load")
    } else {
        ScenarioSet::deterministic(&case(name))
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
