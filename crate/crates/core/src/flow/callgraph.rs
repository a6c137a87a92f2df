use super::cfg::ControlFlowGraph;
use crate::boundary::MethodRegion;
use crate::bytecode::Opcode;
use ruint::aliases::U256;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

pub const DEFAULT_MAX_DEPTH: usize = 5;
const MAX_CHAINS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallKind {
    InternalJump,
    ExternalCall,
    DelegateCall,
    StaticCall,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Callee {
    Region(usize),
    /// External call at `site`; `target` is the constant address if known.
    External {
        site: usize,
        target: Option<U256>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallGraphEdge {
    pub caller: usize,
    pub callee: Callee,
    pub kind: CallKind,
    pub site: usize,
}

/// Innermost region holding `offset` whose method executes it, falling back
/// to the innermost region holding it at all.
pub fn region_of_site(
    cfg: &ControlFlowGraph,
    regions: &[MethodRegion],
    offset: usize,
) -> Option<usize> {
    let owners = cfg.facts.site(&cfg.stream, offset).map(|s| &s.owners);
    let holding = || regions.iter().filter(|r| r.contains(offset));
    let innermost =
        |it: &mut dyn Iterator<Item = &MethodRegion>| it.min_by_key(|r| r.len()).map(|r| r.id);
    if let Some(o) = owners {
        let mut owned = holding().filter(|r| o.contains(&r.owner));
        if let Some(id) = innermost(&mut owned) {
            return Some(id);
        }
    }
    innermost(&mut holding())
}

fn main_region(regions: &[MethodRegion], owner: usize) -> Option<usize> {
    regions
        .iter()
        .filter(|r| r.start == owner)
        .max_by_key(|r| r.len())
        .map(|r| r.id)
}

pub fn call_graph(cfg: &ControlFlowGraph, regions: &[MethodRegion]) -> Vec<CallGraphEdge> {
    let mut out = BTreeSet::new();
    for c in cfg.facts.calls.values() {
        let (Some(caller), Some(callee)) = (
            region_of_site(cfg, regions, c.site),
            main_region(regions, c.target),
        ) else {
            continue;
        };
        if caller != callee {
            out.insert(CallGraphEdge {
                caller,
                callee: Callee::Region(callee),
                kind: CallKind::InternalJump,
                site: c.site,
            });
        }
    }
    // Fragments split from a method hang off the method's main region.
    for r in regions.iter().filter(|r| r.owner != r.start) {
        if let Some(m) = main_region(regions, r.owner) {
            if m != r.id && !regions[m].encloses(r) {
                out.insert(CallGraphEdge {
                    caller: m,
                    callee: Callee::Region(r.id),
                    kind: CallKind::InternalJump,
                    site: r.start,
                });
            }
        }
    }
    for (i, ins) in cfg.stream.code.iter().enumerate() {
        let kind = match ins.opcode {
            Opcode::CALL | Opcode::CALLCODE => CallKind::ExternalCall,
            Opcode::DELEGATECALL => CallKind::DelegateCall,
            Opcode::STATICCALL => CallKind::StaticCall,
            _ => continue,
        };
        let site = &cfg.facts.sites[i];
        if !site.visited {
            continue;
        }
        let Some(caller) = region_of_site(cfg, regions, ins.offset) else {
            continue;
        };
        out.insert(CallGraphEdge {
            caller,
            callee: Callee::External {
                site: ins.offset,
                target: site.operands.get(1).and_then(|v| v.konst),
            },
            kind,
            site: ins.offset,
        });
    }
    out.into_iter().collect()
}

/// Region-to-region adjacency.
pub fn internal_adjacency(edges: &[CallGraphEdge]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for e in edges {
        if let Callee::Region(r) = e.callee {
            adj.entry(e.caller).or_default().insert(r);
        }
    }
    adj
}

/// Simple call paths from `root`, each of at least two regions and at most
/// `max_depth` edges, sorted lexicographically.
pub fn call_chains(edges: &[CallGraphEdge], root: usize, max_depth: usize) -> Vec<Vec<usize>> {
    let adj = internal_adjacency(edges);
    let mut out = Vec::new();
    let mut path = vec![root];
    fn dfs(
        adj: &BTreeMap<usize, BTreeSet<usize>>,
        path: &mut Vec<usize>,
        max_depth: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        if path.len() > max_depth || out.len() >= MAX_CHAINS {
            return;
        }
        let last = *path.last().expect("non-empty path");
        for &n in adj.get(&last).into_iter().flatten() {
            if path.contains(&n) || out.len() >= MAX_CHAINS {
                continue;
            }
            path.push(n);
            out.push(path.clone());
            dfs(adj, path, max_depth, out);
            path.pop();
        }
    }
    dfs(&adj, &mut path, max_depth, &mut out);
    out.sort();
    out
}

/// Every region reachable from `root` through internal edges, `root` included.
pub fn reachable_regions(edges: &[CallGraphEdge], root: usize) -> BTreeSet<usize> {
    let adj = internal_adjacency(edges);
    let mut seen = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(r) = stack.pop() {
        for &n in adj.get(&r).into_iter().flatten() {
            if seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(a: usize, b: usize) -> CallGraphEdge {
        CallGraphEdge {
            caller: a,
            callee: Callee::Region(b),
            kind: CallKind::InternalJump,
            site: 0,
        }
    }

    #[test]
    fn chains_are_simple_and_sorted() {
        let edges = vec![e(0, 2), e(0, 1), e(1, 2), e(2, 0)];
        let chains = call_chains(&edges, 0, DEFAULT_MAX_DEPTH);
        assert_eq!(chains, vec![vec![0, 1], vec![0, 1, 2], vec![0, 2]]);
    }

    #[test]
    fn depth_limit() {
        let edges = vec![e(0, 1), e(1, 2), e(2, 3)];
        assert_eq!(call_chains(&edges, 0, 2), vec![vec![0, 1], vec![0, 1, 2]]);
    }

    #[test]
    fn reachability() {
        let edges = vec![e(0, 1), e(1, 2), e(3, 0)];
        assert_eq!(reachable_regions(&edges, 0), BTreeSet::from([0, 1, 2]));
    }
}
