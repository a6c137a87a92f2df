#![allow(dead_code)]

use smvscan_core::db::{load_db, load_knowledge};
use smvscan_core::detector::Names;
use smvscan_core::matcher::Thresholds;
use smvscan_core::pipeline::{
    analyze_file, scan_analysis, Analysis, Databases, PipelineConfig, ScanResult,
};
use std::path::PathBuf;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn hex(name: &str) -> PathBuf {
    fixtures().join("compiled").join(format!("{name}.hex"))
}

pub fn meta(name: &str) -> serde_json::Value {
    let p = fixtures()
        .join("compiled")
        .join(format!("{name}.meta.json"));
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Every compiled fixture, harnesses included, sorted.
pub fn all_fixtures() -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(fixtures().join("compiled"))
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "hex").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    out.sort();
    out
}

pub fn dbs() -> Databases {
    Databases {
        records: load_db(&fixtures().join("db/subcontracts.tsv")).unwrap(),
        knowledge: load_knowledge(&fixtures().join("db/knowledge.tsv")).unwrap(),
    }
}

pub fn names() -> Names {
    Names::parse(&std::fs::read_to_string(fixtures().join("corpus/names.txt")).unwrap()).unwrap()
}

#[derive(Debug, Clone)]
pub struct Expected {
    pub contract: String,
    pub vulnerable: bool,
    pub smv_type: String,
    pub display: String,
}

pub fn expected() -> Vec<Expected> {
    std::fs::read_to_string(fixtures().join("corpus/expected.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            Expected {
                contract: f[0].into(),
                vulnerable: f[1] == "vulnerable",
                smv_type: f[2].into(),
                display: f[3].into(),
            }
        })
        .collect()
}

pub fn analyze(name: &str) -> Analysis {
    analyze_file(&hex(name), &PipelineConfig::heuristic()).unwrap()
}

pub fn scan_with(name: &str, dbs: &Databases, t: &Thresholds) -> ScanResult {
    scan_analysis(analyze(name), dbs, t, &names())
}

pub fn scan(name: &str) -> ScanResult {
    scan_with(name, &dbs(), &Thresholds::default())
}

/// `(smv_type, display)` per trace.
pub fn trace_keys(r: &ScanResult) -> Vec<(String, String)> {
    r.detection
        .traces
        .iter()
        .map(|t| (t.smv_type.as_str().to_string(), t.display()))
        .collect()
}
