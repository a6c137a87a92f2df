//! Scan reports in JSON and plain text.

use crate::detector::{ChainStep, Names, Rule, VulnerabilityTrace};
use crate::matcher::ReuseMatch;
use crate::pipeline::{Databases, ScanResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub contracts: Vec<ContractReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub traces: Vec<TraceReport>,
    pub warnings: Vec<String>,
    pub matches: Vec<MatchReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub region: usize,
    pub start: usize,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub region: usize,
    pub subcontract: String,
    pub version: String,
    pub method: String,
    pub p_t: f64,
    pub p_n: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub entry_selector: Option<String>,
    pub chain: Vec<StepReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub rule: String,
    pub knowledge: Option<String>,
    pub source: Option<String>,
    pub matches: Vec<MatchReport>,
    pub call_site: Option<usize>,
    pub unguarded_param: Option<usize>,
    pub paired: Option<PairedReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub smv_type: String,
    pub entry_selector: String,
    pub entry_name: Option<String>,
    pub chain: Vec<StepReport>,
    pub affected_slots: Vec<String>,
    pub display: String,
    pub evidence: Evidence,
}

fn steps(chain: &[ChainStep]) -> Vec<StepReport> {
    chain
        .iter()
        .map(|s| StepReport {
            region: s.region,
            start: s.start,
            name: s.name.clone(),
        })
        .collect()
}

fn match_report(m: &ReuseMatch) -> MatchReport {
    MatchReport {
        region: m.region,
        subcontract: m.subcontract.clone(),
        version: m.version.clone(),
        method: m.method.clone(),
        p_t: m.p_t,
        p_n: m.p_n,
        best: m.best,
    }
}

fn trace_report(t: &VulnerabilityTrace, r: &ScanResult, dbs: &Databases) -> TraceReport {
    let ind = &r.detection.indicators[t.indicator];
    let kb = ind.knowledge.map(|k| &dbs.knowledge.entries[k]);
    TraceReport {
        smv_type: t.smv_type.as_str().to_string(),
        entry_selector: format!("0x{:08x}", t.entry_selector),
        entry_name: t.chain.first().and_then(|s| s.name.clone()),
        chain: steps(&t.chain),
        affected_slots: t.affected.iter().map(|a| a.to_string()).collect(),
        display: t.display(),
        evidence: Evidence {
            rule: match ind.rule {
                Rule::Conflict => "conflict",
                Rule::LackOfCheck => "lack-of-check",
            }
            .to_string(),
            knowledge: kb.map(|e| e.to_line()),
            source: kb.map(|e| e.source().to_string()),
            matches: ind
                .matches
                .iter()
                .map(|&m| match_report(&r.matches[m]))
                .collect(),
            call_site: ind.call_site,
            unguarded_param: ind.param,
            paired: t.paired.as_ref().map(|p| PairedReport {
                entry_selector: p.entry_selector.map(|s| format!("0x{s:08x}")),
                chain: steps(&p.chain),
            }),
        },
    }
}

pub fn contract_report(input: &str, r: &ScanResult, dbs: &Databases) -> ContractReport {
    let warnings = r
        .detection
        .warnings
        .iter()
        .map(|w| {
            let ind = &r.detection.indicators[w.indicator];
            let what = ind
                .matches
                .first()
                .map(|&m| format!("{}.{}", r.matches[m].subcontract, r.matches[m].method))
                .unwrap_or_default();
            format!("{what} at region {}: {}", ind.site, w.reason)
        })
        .collect();
    ContractReport {
        input: input.to_string(),
        error: None,
        traces: r
            .detection
            .traces
            .iter()
            .map(|t| trace_report(t, r, dbs))
            .collect(),
        warnings,
        matches: r
            .matches
            .iter()
            .filter(|m| m.best)
            .map(match_report)
            .collect(),
    }
}

pub fn error_report(input: &str, error: &str) -> ContractReport {
    ContractReport {
        input: input.to_string(),
        error: Some(error.to_string()),
        traces: Vec::new(),
        warnings: Vec::new(),
        matches: Vec::new(),
    }
}

impl Report {
    pub fn new(contracts: Vec<ContractReport>) -> Self {
        Report {
            version: REPORT_VERSION,
            contracts,
        }
    }

    pub fn trace_count(&self) -> usize {
        self.contracts.iter().map(|c| c.traces.len()).sum()
    }

    pub fn has_errors(&self) -> bool {
        self.contracts.iter().any(|c| c.error.is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.contracts {
            if let Some(e) = &c.error {
                let _ = writeln!(s, "{}: error: {e}", c.input);
                continue;
            }
            let n = c.traces.len();
            let _ = writeln!(s, "{}: {n} trace{}", c.input, if n == 1 { "" } else { "s" });
            for t in &c.traces {
                let entry = t.entry_name.as_deref().unwrap_or("?");
                let _ = writeln!(
                    s,
                    "  [{}] {entry} ({}): {}",
                    t.smv_type, t.entry_selector, t.display
                );
                for m in &t.evidence.matches {
                    let _ = writeln!(
                        s,
                        "    matched {}@{}.{} at region {} (p_t={:.4}, p_n={:.4})",
                        m.subcontract, m.version, m.method, m.region, m.p_t, m.p_n
                    );
                }
                if let Some(k) = &t.evidence.knowledge {
                    let _ = writeln!(s, "    rule: {k}");
                }
            }
            for w in &c.warnings {
                let _ = writeln!(s, "  warning: {w}");
            }
        }
        s
    }
}

/// Names from `names` plus those implied by the record list's selectors.
pub fn merged_names(names: &Names, dbs: &Databases) -> Names {
    let mut out = names.clone();
    for r in &dbs.records {
        if let Some(s) = r.selector {
            out.selectors.entry(s).or_insert_with(|| r.method.clone());
        }
    }
    out
}
