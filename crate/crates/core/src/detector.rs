//! Indicator rules, entry reachability, state-variable taint and traces.

use crate::boundary::{MethodRegion, RegionKind};
use crate::bytecode::Opcode;
use crate::db::{GuardKind, KnowledgeBase, KnowledgeEntry, SubcontractRecord};
use crate::flow::callgraph::{internal_adjacency, reachable_regions, region_of_site};
use crate::flow::{AccessKind, BlockId, ControlFlowGraph, DfgEdge, EdgeKind, Label, Slot};
use crate::matcher::{passes, score, ReuseMatch, Thresholds};
use crate::pipeline::Analysis;
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

/// Public method names by selector.
#[derive(Debug, Clone, Default)]
pub struct Names {
    pub selectors: BTreeMap<u32, String>,
}

pub fn selector_of(signature: &str) -> u32 {
    use tiny_keccak::{Hasher, Keccak};
    let mut k = Keccak::v256();
    let mut out = [0u8; 32];
    k.update(signature.as_bytes());
    k.finalize(&mut out);
    u32::from_be_bytes([out[0], out[1], out[2], out[3]])
}

impl Names {
    /// Lines are either `name(types)` (selector computed) or
    /// `selector<TAB>name`; `#` comments allowed.
    pub fn parse(text: &str) -> Result<Names, String> {
        let mut selectors = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (sel, name) = match t.split_once('\t') {
                Some((s, n)) => {
                    let sel = u32::from_str_radix(s.trim().trim_start_matches("0x"), 16)
                        .map_err(|_| format!("line {}: bad selector {s:?}", i + 1))?;
                    (sel, n.trim())
                }
                None if t.contains('(') && t.ends_with(')') => (selector_of(t), t),
                None => {
                    return Err(format!(
                        "line {}: expected a signature or selector<TAB>name",
                        i + 1
                    ))
                }
            };
            let short = name.split('(').next().unwrap_or(name).to_string();
            selectors.insert(sel, short);
        }
        Ok(Names { selectors })
    }

    pub fn from_signatures<'a>(sigs: impl IntoIterator<Item = &'a str>) -> Names {
        Names {
            selectors: sigs
                .into_iter()
                .map(|s| (selector_of(s), s.split('(').next().unwrap_or(s).to_string()))
                .collect(),
        }
    }
}

/// `sensitive=` value naming the account balance; the only one checked.
pub const ETH_BALANCE: &str = "ETH-balance";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Affected {
    Slot(Slot),
    EthBalance,
}

impl fmt::Display for Affected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Affected::EthBalance => f.write_str("ETH balance"),
            Affected::Slot(Slot::Constant(k)) => write!(f, "slot {k:#x}"),
            Affected::Slot(Slot::Hashed(b)) => write!(f, "mapping slot {b:#x}"),
            Affected::Slot(Slot::Opaque) => f.write_str("opaque slot"),
        }
    }
}

impl Serialize for Affected {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Conflict,
    LackOfCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Indicator {
    pub rule: Rule,
    /// Matched region the rule fired on.
    pub site: usize,
    /// Second matched region of a conflict.
    pub partner: Option<usize>,
    /// Public region whose path reaches the unguarded call.
    pub entry: Option<usize>,
    pub call_site: Option<usize>,
    /// 1-based parameter left unguarded.
    pub param: Option<usize>,
    pub knowledge: Option<usize>,
    /// Indices into the match list.
    pub matches: Vec<usize>,
    pub common_slots: Vec<Affected>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmvType {
    VariableConflict,
    LackOfSecurityCheck,
}

impl SmvType {
    pub fn as_str(self) -> &'static str {
        match self {
            SmvType::VariableConflict => "variable-conflict",
            SmvType::LackOfSecurityCheck => "lack-of-security-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainStep {
    pub region: usize,
    pub start: usize,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedPath {
    pub entry_selector: Option<u32>,
    pub chain: Vec<ChainStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VulnerabilityTrace {
    pub smv_type: SmvType,
    pub entry_selector: u32,
    pub entry_region: usize,
    pub chain: Vec<ChainStep>,
    pub affected: BTreeSet<Affected>,
    pub paired: Option<PairedPath>,
    /// Index into the indicator list.
    pub indicator: usize,
}

impl VulnerabilityTrace {
    /// Named steps joined with arrows, then the affected set.
    pub fn display(&self) -> String {
        let mut parts: Vec<String> = named(&self.chain);
        if let Some(p) = &self.paired {
            let other = named(&p.chain);
            if !other.is_empty() {
                parts.push(format!("[{}]", other.join(" → ")));
            }
        }
        let affected: Vec<String> = self.affected.iter().map(|a| a.to_string()).collect();
        parts.push(format!("{{{}}}", affected.join(", ")));
        parts.join(" → ")
    }
}

fn named(chain: &[ChainStep]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in chain {
        if let Some(n) = &s.name {
            if out.last() != Some(n) {
                out.push(n.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub indicator: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Detection {
    pub indicators: Vec<Indicator>,
    pub traces: Vec<VulnerabilityTrace>,
    pub warnings: Vec<Warning>,
}

/// Block graph with internal calls summarised: a call block also flows to
/// its return block when the callee can return, and return jumps have no
/// successors.
pub struct SummaryGraph {
    pub succ: Vec<Vec<BlockId>>,
    /// Call block to (callee entry, continuation if the callee returns).
    pub calls: BTreeMap<BlockId, (BlockId, Option<BlockId>)>,
}

impl SummaryGraph {
    pub fn new(cfg: &ControlFlowGraph) -> Self {
        let mut succ: Vec<BTreeSet<BlockId>> = vec![BTreeSet::new(); cfg.blocks.len()];
        let mut returns_to = BTreeSet::new();
        for &(b, t, kind) in &cfg.facts.edges {
            match (t, kind) {
                (Some(t), EdgeKind::CallReturn) => {
                    returns_to.insert(t);
                }
                (t, _) => {
                    succ[b].insert(t.unwrap_or(cfg.unknown));
                }
            }
        }
        let mut calls = BTreeMap::new();
        for c in cfg.facts.calls.values() {
            let (Some(b), Some(callee)) = (cfg.block_at(c.site), cfg.block_starting_at(c.target))
            else {
                continue;
            };
            let ret = cfg
                .block_starting_at(c.ret)
                .filter(|r| returns_to.contains(r));
            if let Some(r) = ret {
                succ[b].insert(r);
            }
            calls.insert(b, (callee, ret));
        }
        SummaryGraph {
            succ: succ.into_iter().map(|s| s.into_iter().collect()).collect(),
            calls,
        }
    }

    /// Blocks from which every path ends in REVERT or INVALID. A call
    /// reverts when the callee always does or its continuation always does.
    pub fn reverting(&self, cfg: &ControlFlowGraph) -> Vec<bool> {
        let mut rev: Vec<bool> = (0..self.succ.len())
            .map(|b| {
                b != cfg.unknown
                    && cfg
                        .last_instruction(b)
                        .is_some_and(|i| matches!(i.opcode, Opcode::REVERT | Opcode::INVALID))
            })
            .collect();
        loop {
            let mut changed = false;
            for b in 0..self.succ.len() {
                if rev[b] {
                    continue;
                }
                let now = match self.calls.get(&b) {
                    Some(&(callee, ret)) => rev[callee] || ret.is_some_and(|r| rev[r]),
                    None => !self.succ[b].is_empty() && self.succ[b].iter().all(|&s| rev[s]),
                };
                if now {
                    rev[b] = true;
                    changed = true;
                }
            }
            if !changed {
                return rev;
            }
        }
    }

    pub fn reaches(&self, from: BlockId, to: BlockId, removed: &BTreeSet<BlockId>) -> bool {
        if removed.contains(&from) {
            return false;
        }
        let mut seen = vec![false; self.succ.len()];
        let mut q = VecDeque::from([from]);
        seen[from] = true;
        while let Some(b) = q.pop_front() {
            if b == to {
                return true;
            }
            for &s in &self.succ[b] {
                if !seen[s] && !removed.contains(&s) {
                    seen[s] = true;
                    q.push_back(s);
                }
            }
        }
        false
    }
}

/// A conditional branch on a compared value with exactly one reverting side.
#[derive(Debug, Clone)]
pub struct Guard {
    pub block: BlockId,
    pub site: usize,
    pub taint: BTreeSet<Label>,
}

pub fn find_guards(cfg: &ControlFlowGraph, graph: &SummaryGraph, reverting: &[bool]) -> Vec<Guard> {
    let mut out = Vec::new();
    for b in cfg.reachable_blocks() {
        let Some(last) = cfg.last_instruction(b) else {
            continue;
        };
        if last.opcode != Opcode::JUMPI {
            continue;
        }
        let idx = cfg.blocks[b].ins.end - 1;
        let Some(cond) = cfg.facts.sites[idx].operands.get(1) else {
            continue;
        };
        if !cond.compared || cond.konst.is_some() {
            continue;
        }
        let s = &graph.succ[b];
        let n_rev = s.iter().filter(|&&x| reverting[x]).count();
        if n_rev >= 1 && n_rev < s.len() {
            out.push(Guard {
                block: b,
                site: last.offset,
                taint: cond.taint.clone(),
            });
        }
    }
    out
}

fn is_c1(op: Opcode) -> bool {
    matches!(
        op,
        Opcode::CALLER
            | Opcode::CALLDATASIZE
            | Opcode::CALLDATALOAD
            | Opcode::CALLVALUE
            | Opcode::CALLDATACOPY
            | Opcode::CALLCODE
    )
}

/// Storage slots and value transfers reached by message-call data along
/// data-flow edges, for code run while `root` (and `within`, if given) is on
/// the call string.
pub fn taint_state_variables(
    cfg: &ControlFlowGraph,
    dfg: &BTreeSet<DfgEdge>,
    root: usize,
    within: Option<usize>,
) -> BTreeSet<Affected> {
    let code = &cfg.stream.code;
    let sites = &cfg.facts.sites;
    let mut adj: BTreeMap<usize, Vec<(usize, u8)>> = BTreeMap::new();
    for e in dfg {
        adj.entry(e.from).or_default().push((e.to, e.operand));
    }
    let on_string = |i: usize, need_within: bool| {
        let s = &sites[i].stack_owners;
        s.contains(&root) && (!need_within || within.is_none_or(|w| s.contains(&w)))
    };
    let mut reached: BTreeSet<usize> = BTreeSet::new();
    let mut via: BTreeMap<usize, BTreeSet<u8>> = BTreeMap::new();
    let mut q = VecDeque::new();
    for (i, ins) in code.iter().enumerate() {
        if sites[i].visited && is_c1(ins.opcode) && on_string(i, false) {
            reached.insert(ins.offset);
            q.push_back(ins.offset);
        }
    }
    while let Some(d) = q.pop_front() {
        for &(to, operand) in adj.get(&d).into_iter().flatten() {
            via.entry(to).or_default().insert(operand);
            if reached.insert(to) {
                q.push_back(to);
            }
        }
    }
    let mut writes: BTreeMap<usize, Vec<&Slot>> = BTreeMap::new();
    for (site, kind, slot) in cfg.facts.storage.keys() {
        if *kind == AccessKind::Write {
            writes.entry(*site).or_default().push(slot);
        }
    }
    let mut out = BTreeSet::new();
    for (&site, ops) in &via {
        let Some(i) = cfg.stream.index_of(site) else {
            continue;
        };
        if !on_string(i, true) {
            continue;
        }
        match code[i].opcode {
            Opcode::SSTORE if ops.contains(&0) || ops.contains(&1) => {
                for s in writes.get(&site).into_iter().flatten() {
                    out.insert(Affected::Slot((*s).clone()));
                }
            }
            Opcode::CALL | Opcode::CALLCODE
                if (ops.contains(&1) || ops.contains(&2))
                    && sites[i].operands.get(2).is_some_and(|v| !v.is_zero()) =>
            {
                out.insert(Affected::EthBalance);
            }
            _ => {}
        }
    }
    out
}

/// Shortest region path from `from` to `to` over internal call edges.
pub fn region_path(
    adj: &BTreeMap<usize, BTreeSet<usize>>,
    from: usize,
    to: usize,
) -> Option<Vec<usize>> {
    let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
    let mut q = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(r) = q.pop_front() {
        if r == to {
            let mut path = vec![to];
            let mut cur = to;
            while let Some(&p) = prev.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &n in adj.get(&r).into_iter().flatten() {
            if seen.insert(n) {
                prev.insert(n, r);
                q.push_back(n);
            }
        }
    }
    None
}

struct Ctx<'a> {
    a: &'a Analysis,
    matches: &'a [ReuseMatch],
    records: &'a [SubcontractRecord],
    kb: &'a KnowledgeBase,
    names: &'a Names,
    adj: BTreeMap<usize, BTreeSet<usize>>,
    /// Public regions in selector order with what they reach.
    publics: Vec<(u32, usize, BTreeSet<usize>)>,
    best: BTreeMap<usize, usize>,
    writes: BTreeMap<usize, BTreeSet<Slot>>,
    sends: BTreeSet<usize>,
}

impl<'a> Ctx<'a> {
    fn region(&self, id: usize) -> &MethodRegion {
        &self.a.regions[id]
    }

    fn name(&self, id: usize) -> Option<String> {
        let r = self.region(id);
        if let Some(s) = r.selector {
            if let Some(n) = self.names.selectors.get(&s) {
                return Some(n.clone());
            }
        }
        self.best
            .get(&id)
            .map(|&m| self.records[self.matches[m].record].method.clone())
    }

    fn steps(&self, path: &[usize]) -> Vec<ChainStep> {
        path.iter()
            .map(|&r| ChainStep {
                region: r,
                start: self.region(r).start,
                name: self.name(r),
            })
            .collect()
    }

    fn entries_reaching(&self, r: usize) -> impl Iterator<Item = &(u32, usize, BTreeSet<usize>)> {
        self.publics
            .iter()
            .filter(move |(_, _, reach)| reach.contains(&r))
    }

    /// Slots written by any method on a public path through `r`.
    fn writeon(&self, r: usize) -> BTreeSet<Slot> {
        let mut out = BTreeSet::new();
        for (_, _, reach) in self.entries_reaching(r) {
            for q in reach {
                out.extend(self.writes.get(q).into_iter().flatten().cloned());
            }
        }
        out.retain(|s| *s != Slot::Opaque);
        out
    }

    fn modifies(&self, r: usize) -> bool {
        reachable_regions(&self.a.edges, r)
            .iter()
            .any(|q| self.sends.contains(q) || self.writes.get(q).is_some_and(|w| !w.is_empty()))
    }
}

pub fn detect(
    a: &Analysis,
    matches: &[ReuseMatch],
    records: &[SubcontractRecord],
    kb: &KnowledgeBase,
    thresholds: &Thresholds,
    names: &Names,
) -> Detection {
    let cfg = &a.cfg;
    let adj = internal_adjacency(&a.edges);
    let mut publics: Vec<(u32, usize, BTreeSet<usize>)> = a
        .regions
        .iter()
        .filter(|r| r.kind == RegionKind::Public)
        .filter_map(|r| Some((r.selector?, r.id, reachable_regions(&a.edges, r.id))))
        .collect();
    publics.sort();
    let best = matches
        .iter()
        .enumerate()
        .filter(|(_, m)| m.best)
        .map(|(i, m)| (m.region, i))
        .collect();
    let mut writes: BTreeMap<usize, BTreeSet<Slot>> = BTreeMap::new();
    for (site, kind, slot) in cfg.facts.storage.keys() {
        if *kind == AccessKind::Write {
            if let Some(r) = region_of_site(cfg, &a.regions, *site) {
                writes.entry(r).or_default().insert(slot.clone());
            }
        }
    }
    let mut sends = BTreeSet::new();
    for (i, ins) in cfg.stream.code.iter().enumerate() {
        let s = &cfg.facts.sites[i];
        if s.visited
            && matches!(ins.opcode, Opcode::CALL | Opcode::CALLCODE)
            && s.operands.get(2).is_some_and(|v| !v.is_zero())
        {
            if let Some(r) = region_of_site(cfg, &a.regions, ins.offset) {
                sends.insert(r);
            }
        }
    }
    let cx = Ctx {
        a,
        matches,
        records,
        kb,
        names,
        adj,
        publics,
        best,
        writes,
        sends,
    };

    let mut indicators = conflict_indicators(&cx, thresholds);
    indicators.extend(lack_of_check_indicators(&cx));

    let mut traces = Vec::new();
    let mut warnings = Vec::new();
    for (idx, ind) in indicators.iter().enumerate() {
        match confirm(&cx, ind, idx) {
            Ok(t) => traces.push(t),
            Err(reason) => warnings.push(Warning {
                indicator: idx,
                reason,
            }),
        }
    }
    traces.sort_by(|x, y| {
        (
            x.entry_selector,
            cx.region(x.chain.last().map_or(0, |s| s.region)).start,
            x.smv_type,
        )
            .cmp(&(
                y.entry_selector,
                cx.region(y.chain.last().map_or(0, |s| s.region)).start,
                y.smv_type,
            ))
    });
    Detection {
        indicators,
        traces,
        warnings,
    }
}

fn conflict_indicators(cx: &Ctx, t: &Thresholds) -> Vec<Indicator> {
    let mut out = Vec::new();
    let best: Vec<(usize, usize)> = cx.best.iter().map(|(&r, &m)| (r, m)).collect();
    for (i, &(r1, m1)) in best.iter().enumerate() {
        for &(r2, m2) in &best[i + 1..] {
            let (a, b) = (
                &cx.records[cx.matches[m1].record],
                &cx.records[cx.matches[m2].record],
            );
            let (ra, rb) = (a.method_ref(), b.method_ref());
            if ra == rb {
                continue;
            }
            let kb_entry = cx.kb.is_conflict(&ra, &rb);
            let similar = kb_entry.is_some() || {
                let (s1, s2) = (&cx.a.signatures[r1], &cx.a.signatures[r2]);
                a.method == b.method
                    && a.subcontract != b.subcontract
                    && score(s1, s2, t).is_some_and(|s| passes(s, t))
                    && score(s2, s1, t).is_some_and(|s| passes(s, t))
            };
            if !similar {
                continue;
            }
            let common: Vec<Affected> = cx
                .writeon(r1)
                .intersection(&cx.writeon(r2))
                .cloned()
                .map(Affected::Slot)
                .collect();
            if common.is_empty() {
                continue;
            }
            out.push(Indicator {
                rule: Rule::Conflict,
                site: r1,
                partner: Some(r2),
                entry: None,
                call_site: None,
                param: None,
                knowledge: kb_entry,
                matches: vec![m1, m2],
                common_slots: common,
            });
        }
    }
    out
}

fn lack_of_check_indicators(cx: &Ctx) -> Vec<Indicator> {
    let cfg = &cx.a.cfg;
    let graph = SummaryGraph::new(cfg);
    let reverting = graph.reverting(cfg);
    let guards = find_guards(cfg, &graph, &reverting);
    let written_constants: BTreeSet<_> = cfg
        .facts
        .storage
        .keys()
        .filter_map(|(_, k, s)| match (k, s) {
            (AccessKind::Write, Slot::Constant(c)) => Some(*c),
            _ => None,
        })
        .collect();
    let caller_guard = |g: &Guard| g.taint.iter().any(Label::is_caller);
    let lock_guard = |g: &Guard| {
        g.taint
            .iter()
            .any(|l| matches!(l, Label::Storage(s) if written_constants.contains(s)))
    };

    let mut out = Vec::new();
    for (&r, &m) in &cx.best {
        let rec = &cx.records[cx.matches[m].record];
        if rec.visibility != crate::db::Visibility::Internal {
            continue;
        }
        let region = cx.region(r);
        for (k, entry) in cx.kb.access_control(&rec.method_ref()) {
            let KnowledgeEntry::AccessControl { params, guard, .. } = entry else {
                continue;
            };
            if !cx.modifies(r) {
                continue;
            }
            let mut calls: Vec<_> = cfg
                .facts
                .calls
                .values()
                .filter(|c| c.target == region.start)
                .collect();
            calls.sort_by_key(|c| c.site);
            let mut found = None;
            'entries: for (_, p, reach) in &cx.publics {
                let Some(entry_block) = cfg.block_starting_at(cx.region(*p).start) else {
                    continue;
                };
                for c in &calls {
                    let Some(caller) = region_of_site(cfg, &cx.a.regions, c.site) else {
                        continue;
                    };
                    let Some(call_block) = cfg.block_at(c.site) else {
                        continue;
                    };
                    if !reach.contains(&caller)
                        || !graph.reaches(entry_block, call_block, &BTreeSet::new())
                    {
                        continue;
                    }
                    for &param in params {
                        let Some(arg) = c.args.get(param - 1) else {
                            continue;
                        };
                        let attacker: BTreeSet<&Label> = arg
                            .taint
                            .iter()
                            .filter(|l| l.is_attacker_controlled())
                            .collect();
                        if attacker.is_empty() {
                            continue;
                        }
                        let removed: BTreeSet<BlockId> = guards
                            .iter()
                            .filter(|g| {
                                caller_guard(g)
                                    || match guard {
                                        GuardKind::CallerCheck => false,
                                        GuardKind::ValueBound => {
                                            g.taint.iter().any(|l| attacker.contains(l))
                                        }
                                        GuardKind::ReentrancyGuard => lock_guard(g),
                                    }
                            })
                            .map(|g| g.block)
                            .collect();
                        if graph.reaches(entry_block, call_block, &removed) {
                            found = Some((*p, c.site, param));
                            break 'entries;
                        }
                    }
                }
            }
            if let Some((p, site, param)) = found {
                out.push(Indicator {
                    rule: Rule::LackOfCheck,
                    site: r,
                    partner: None,
                    entry: Some(p),
                    call_site: Some(site),
                    param: Some(param),
                    knowledge: Some(k),
                    matches: vec![m],
                    common_slots: Vec::new(),
                });
            }
        }
    }
    out
}

/// Condition-1 then Condition-2 for one indicator.
fn confirm(cx: &Ctx, ind: &Indicator, idx: usize) -> Result<VulnerabilityTrace, String> {
    let cfg = &cx.a.cfg;
    let first_path = |r: usize| -> Option<(u32, usize, Vec<usize>)> {
        cx.entries_reaching(r)
            .filter_map(|(sel, p, _)| region_path(&cx.adj, *p, r).map(|path| (*sel, *p, path)))
            .min_by_key(|(sel, _, path)| (path.len(), *sel))
    };
    match ind.rule {
        Rule::LackOfCheck => {
            let p = ind.entry.ok_or("no entry")?;
            let path = region_path(&cx.adj, p, ind.site)
                .ok_or("site unreachable from any public entry")?;
            let sel = cx.region(p).selector.ok_or("entry without selector")?;
            let affected = taint_state_variables(
                cfg,
                &cfg.facts.dfg,
                cx.region(p).start,
                Some(cx.region(ind.site).start),
            );
            if affected.is_empty() {
                return Err("no state variable reached by message-call data".into());
            }
            let sensitive = ind.knowledge.and_then(|k| match &cx.kb.entries[k] {
                KnowledgeEntry::AccessControl { sensitive, .. } => sensitive.as_deref(),
                _ => None,
            });
            if sensitive == Some(ETH_BALANCE) && !affected.contains(&Affected::EthBalance) {
                return Err("declared ETH-balance effect not reached by message-call data".into());
            }
            Ok(VulnerabilityTrace {
                smv_type: SmvType::LackOfSecurityCheck,
                entry_selector: sel,
                entry_region: p,
                chain: cx.steps(&path),
                affected,
                paired: None,
                indicator: idx,
            })
        }
        Rule::Conflict => {
            let partner = ind.partner.ok_or("no partner")?;
            let (sel1, p1, path1) =
                first_path(ind.site).ok_or("site unreachable from any public entry")?;
            let (sel2, p2, path2) =
                first_path(partner).ok_or("partner unreachable from any public entry")?;
            let mut tainted = taint_state_variables(cfg, &cfg.facts.dfg, cx.region(p1).start, None);
            tainted.extend(taint_state_variables(
                cfg,
                &cfg.facts.dfg,
                cx.region(p2).start,
                None,
            ));
            let affected: BTreeSet<Affected> = ind
                .common_slots
                .iter()
                .filter(|s| tainted.contains(s))
                .cloned()
                .collect();
            if affected.is_empty() {
                return Err("shared slots not reached by message-call data".into());
            }
            Ok(VulnerabilityTrace {
                smv_type: SmvType::VariableConflict,
                entry_selector: sel1,
                entry_region: p1,
                chain: cx.steps(&path1),
                affected,
                paired: Some(PairedPath {
                    entry_selector: Some(sel2),
                    chain: cx.steps(&path2),
                }),
                indicator: idx,
            })
        }
    }
}
