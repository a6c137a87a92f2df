use super::{normalize, LabelSource, MethodRegion, RegionKind};
use crate::flow::ControlFlowGraph;
use std::collections::{BTreeMap, BTreeSet};

/// Regions from dispatcher targets, internal-call targets, and code a
/// method reaches outside its own entry run.
pub fn recover_heuristic(cfg: &ControlFlowGraph) -> Vec<MethodRegion> {
    let stream = &cfg.stream;
    let sites = &cfg.facts.sites;

    let mut public: BTreeMap<usize, u32> = BTreeMap::new();
    for (&sel, &b) in &cfg.public_entries {
        public.entry(cfg.blocks[b].start).or_insert(sel);
    }
    let mut call_sites: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for c in cfg.facts.calls.values() {
        call_sites.entry(c.target).or_default().insert(c.site);
    }
    let entries: BTreeSet<usize> = public.keys().chain(call_sites.keys()).copied().collect();

    let mut regions = Vec::new();
    for &e in &entries {
        let Some(i0) = stream.index_of(e) else {
            continue;
        };
        let mut last = i0;
        let mut j = i0 + 1;
        while j < stream.code.len() {
            let s = &sites[j];
            if s.visited {
                if !s.owners.contains(&e) {
                    break;
                }
                last = j;
            }
            j += 1;
        }
        let kind = if public.contains_key(&e) {
            RegionKind::Public
        } else if call_sites.get(&e).map_or(0, |s| s.len()) >= 2 {
            RegionKind::Internal
        } else {
            RegionKind::InheritedRecovered
        };
        regions.push(MethodRegion {
            id: 0,
            start: e,
            end: stream.code[last].next_offset(),
            kind,
            selector: public.get(&e).copied(),
            source: LabelSource::Heuristic,
            owner: e,
        });
    }

    // Reached code owned by a method but outside every region: split-off
    // fragments of that method.
    let covered = |off: usize, regions: &[MethodRegion]| regions.iter().any(|r| r.contains(off));
    let mut fragments = Vec::new();
    let mut run: Option<(usize, usize, usize)> = None; // owner, first idx, last idx
    for (i, ins) in stream.code.iter().enumerate() {
        let s = &sites[i];
        if !s.visited {
            continue;
        }
        let owner = if covered(ins.offset, &regions) || s.owners.len() != 1 {
            None
        } else {
            s.owners
                .iter()
                .next()
                .copied()
                .filter(|o| entries.contains(o))
        };
        match (owner, run) {
            (Some(o), Some((ro, first, _))) if o == ro => run = Some((ro, first, i)),
            (Some(o), prev) => {
                if let Some(p) = prev {
                    fragments.push(p);
                }
                run = Some((o, i, i));
            }
            (None, Some(p)) => {
                fragments.push(p);
                run = None;
            }
            (None, None) => {}
        }
    }
    if let Some(p) = run {
        fragments.push(p);
    }
    for (owner, first, last) in fragments {
        regions.push(MethodRegion {
            id: 0,
            start: stream.code[first].offset,
            end: stream.code[last].next_offset(),
            kind: RegionKind::InheritedRecovered,
            selector: None,
            source: LabelSource::Heuristic,
            owner,
        });
    }
    normalize(regions)
}
