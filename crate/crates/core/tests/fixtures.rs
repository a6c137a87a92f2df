mod common;

use common::*;
use smvscan_core::boundary::{recover_heuristic, RegionKind};
use smvscan_core::db::{build_db, format_db, parse_db, parse_manifest, Visibility};
use smvscan_core::flow::explore::JumpKind;
use smvscan_core::pipeline::PipelineConfig;
use smvscan_core::signature::FeatureSymbol;
use std::collections::BTreeSet;

fn offsets(v: &serde_json::Value) -> BTreeSet<usize> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as usize)
        .collect()
}

// Source maps mark internal calls ('i') and returns ('o') on the jumps.
#[test]
fn call_and_return_jumps_agree_with_source_maps() {
    for name in all_fixtures() {
        let m = meta(&name);
        let a = analyze(&name);
        let facts = &a.cfg.facts;
        assert!(!facts.truncated, "{name}");
        let calls: BTreeSet<usize> = facts.calls.values().map(|c| c.site).collect();
        let returns: BTreeSet<usize> = facts
            .jumps
            .iter()
            .filter(|(_, k)| k.iter().any(|(k, _)| *k == JumpKind::Return))
            .map(|(s, _)| *s)
            .collect();
        let (mi, mo) = (offsets(&m["calls"]), offsets(&m["returns"]));
        assert!(
            calls.is_subset(&mi),
            "{name}: calls not marked {:?}",
            calls.difference(&mi).collect::<Vec<_>>()
        );
        assert!(
            mo.is_subset(&returns),
            "{name}: missed returns {:?}",
            mo.difference(&returns).collect::<Vec<_>>()
        );
        let unresolved = facts
            .jumps
            .values()
            .flatten()
            .filter(|(k, _)| *k == JumpKind::Unresolved)
            .count();
        assert_eq!(unresolved, 0, "{name}");
    }
}

#[test]
fn dispatcher_selectors_agree_with_abi() {
    for name in all_fixtures() {
        let m = meta(&name);
        let abi: BTreeSet<u32> = m["methods"]
            .as_object()
            .unwrap()
            .values()
            .map(|v| u32::from_str_radix(v.as_str().unwrap(), 16).unwrap())
            .collect();
        let a = analyze(&name);
        let found: BTreeSet<u32> = a.cfg.public_entries.keys().copied().collect();
        assert_eq!(found, abi, "{name}");
        let public: BTreeSet<u32> = a
            .regions
            .iter()
            .filter(|r| r.kind == RegionKind::Public)
            .filter_map(|r| r.selector)
            .collect();
        assert_eq!(public, abi, "{name}");
    }
}

#[test]
fn inherited_validate_recovered_inside_handle() {
    let m = meta("Handler");
    let f = m["functions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["name"] == "validate")
        .unwrap();
    let (first, last) = (
        f["first"].as_u64().unwrap() as usize,
        f["last"].as_u64().unwrap() as usize,
    );
    let a = analyze("Handler");
    let stream = &a.cfg.stream;
    let idx = |o: usize| stream.index_covering(o).unwrap() as i64;
    let best = recover_heuristic(&a.cfg)
        .into_iter()
        .min_by_key(|r| (idx(r.start) - idx(first)).abs())
        .unwrap();
    assert!((idx(best.start) - idx(first)).abs() <= 2, "{best:?}");
    assert!((idx(best.end - 1) - idx(last)).abs() <= 2, "{best:?}");
    assert_ne!(best.kind, RegionKind::Public);
}

#[test]
fn shipped_db_is_reproducible() {
    let dir = fixtures().join("compiled");
    let manifest =
        parse_manifest(&std::fs::read_to_string(fixtures().join("db/manifest.tsv")).unwrap())
            .unwrap();
    let (records, errors) = build_db(&dir, &manifest, &PipelineConfig::heuristic());
    assert!(errors.is_empty(), "{errors:?}");
    let text = format_db(&records);
    assert_eq!(
        text,
        std::fs::read_to_string(fixtures().join("db/subcontracts.tsv")).unwrap()
    );
    let (again, _) = build_db(&dir, &manifest, &PipelineConfig::heuristic());
    assert_eq!(format_db(&again), text);
    assert_eq!(format_db(&parse_db(&text).unwrap()), text);
}

#[test]
fn shipped_db_contents() {
    let d = dbs();
    let get = |s: &str, m: &str| {
        d.records
            .iter()
            .find(|r| r.subcontract == s && r.method == m)
            .unwrap()
    };
    let (xp, meta_xp) = (get("SwapUtils", "_xp"), get("MetaSwapUtils", "_xp"));
    assert_ne!(xp.intra, meta_xp.intra);
    assert!(get("Address", "CallWithValue")
        .intra
        .contains(&FeatureSymbol::C0));
    assert!(get("ERC20", "_transfer").intra.contains(&FeatureSymbol::W));
    assert!(d
        .records
        .iter()
        .all(|r| r.visibility == Visibility::Internal));
    assert!(d.knowledge.unresolved(&d.records).is_empty());
}

#[test]
fn corpus_traces_match_expectations() {
    let d = dbs();
    let exp = expected();
    assert!(exp.iter().filter(|e| e.vulnerable).count() >= 10);
    assert!(exp.iter().filter(|e| !e.vulnerable).count() >= 10);
    for e in &exp {
        let r = scan_with(&e.contract, &d, &Default::default());
        let want: Vec<(String, String)> = if e.vulnerable {
            vec![(e.smv_type.clone(), e.display.clone())]
        } else {
            Vec::new()
        };
        assert_eq!(trace_keys(&r), want, "{}", e.contract);
    }
}

#[test]
fn motivating_examples() {
    let swap = scan("Swap");
    let t = &swap.detection.traces;
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].display(), "_swap → CallWithValue → {ETH balance}");
    assert!(scan("SwapPatched").detection.traces.is_empty());

    let meta_swap = scan("MetaSwap");
    let t = &meta_swap.detection.traces;
    assert_eq!(t.len(), 1);
    let ind = &meta_swap.detection.indicators[t[0].indicator];
    let mut subs: Vec<&str> = ind
        .matches
        .iter()
        .map(|&m| meta_swap.matches[m].subcontract.as_str())
        .collect();
    subs.sort();
    assert_eq!(subs, ["MetaSwapUtils", "SwapUtils"]);
}
