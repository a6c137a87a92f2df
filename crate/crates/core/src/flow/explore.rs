//! Context-sensitive abstract interpretation over basic blocks.
//!
//! A context is the current method owner plus a bounded call string of
//! pending internal calls. Internal calls are recognised by the compiler
//! idiom `PUSH ret; <args>; PUSH target; JUMP` and returns by a jump to the
//! return address recorded in the innermost frame.

use super::memory::Memory;
use super::value::{AbsValue, Label, Slot};
use crate::bytecode::{InstructionStream, Opcode};
use ruint::aliases::U256;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::ops::Range;
use tracing::debug;

/// Owner of the dispatcher prologue, which belongs to no method.
pub const PROLOGUE: usize = usize::MAX;

/// Operand index used for memory-mediated data-flow edges.
pub const MEM_OPERAND: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Fallthrough,
    Jump,
    BranchTaken,
    CallReturn,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Fallthrough => "fallthrough",
            EdgeKind::Jump => "jump",
            EdgeKind::BranchTaken => "branch-taken",
            EdgeKind::CallReturn => "call-return",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

/// Def-use edge between instruction sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DfgEdge {
    pub from: usize,
    pub to: usize,
    /// Operand position at `to` (0 = top of stack), or [`MEM_OPERAND`].
    pub operand: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frame {
    pub ret: usize,
    pub owner: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Ctx {
    owner: usize,
    frames: Vec<Frame>,
}

impl Ctx {
    fn depth(&self) -> u32 {
        self.frames.len() as u32
    }

    fn stack_owners(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.owner).chain(self.frames.iter().map(|f| f.owner))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    stack: Vec<AbsValue>,
    mem: Memory,
}

impl State {
    fn join(&self, other: &State) -> State {
        let n = self.stack.len().min(other.stack.len());
        let a = &self.stack[self.stack.len() - n..];
        let b = &other.stack[other.stack.len() - n..];
        State {
            stack: a.iter().zip(b).map(|(x, y)| x.join(y)).collect(),
            mem: self.mem.join(&other.mem),
        }
    }
}

/// Facts gathered for one instruction, joined over all contexts.
#[derive(Debug, Clone, Default)]
pub struct SiteInfo {
    pub visited: bool,
    /// Stack operands consumed, top first.
    pub operands: Vec<AbsValue>,
    pub owners: BTreeSet<usize>,
    /// Every method on the call string when the site executed.
    pub stack_owners: BTreeSet<usize>,
}

/// A resolved internal call.
#[derive(Debug, Clone)]
pub struct CallSite {
    pub site: usize,
    pub target: usize,
    pub ret: usize,
    /// Arguments between the return address and the target, deepest first.
    pub args: Vec<AbsValue>,
    pub callers: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JumpKind {
    Call,
    Return,
    Plain,
    Unresolved,
}

/// Static block boundaries.
#[derive(Debug, Clone)]
pub struct BlockSpan {
    pub start: usize,
    pub ins: Range<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExploreConfig {
    pub stack_limit: usize,
    pub max_call_depth: usize,
    pub budget: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            stack_limit: 32,
            max_call_depth: 16,
            budget: 400_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlowFacts {
    pub sites: Vec<SiteInfo>,
    pub calls: BTreeMap<(usize, usize), CallSite>,
    /// Jump sites classified by kind, with resolved targets.
    pub jumps: BTreeMap<usize, BTreeSet<(JumpKind, usize)>>,
    /// Block-level edges; `None` target is the unknown block.
    pub edges: BTreeSet<(usize, Option<usize>, EdgeKind)>,
    pub dfg: BTreeSet<DfgEdge>,
    pub storage: BTreeMap<(usize, AccessKind, Slot), BTreeSet<usize>>,
    pub public_entries: BTreeMap<u32, usize>,
    pub truncated: bool,
}

impl FlowFacts {
    pub fn site(&self, stream: &InstructionStream, offset: usize) -> Option<&SiteInfo> {
        stream.index_of(offset).map(|i| &self.sites[i])
    }

    pub fn is_return_jump(&self, offset: usize) -> bool {
        self.jumps
            .get(&offset)
            .is_some_and(|k| k.iter().any(|(kind, _)| *kind == JumpKind::Return))
    }
}

struct Explorer<'a> {
    stream: &'a InstructionStream,
    blocks: &'a [BlockSpan],
    block_at: HashMap<usize, usize>,
    cfg: ExploreConfig,
    facts: FlowFacts,
    states: HashMap<(usize, Ctx), State>,
    queue: VecDeque<(usize, Ctx)>,
    queued: std::collections::HashSet<(usize, Ctx)>,
}

pub fn explore(stream: &InstructionStream, blocks: &[BlockSpan], cfg: ExploreConfig) -> FlowFacts {
    let mut ex = Explorer {
        stream,
        blocks,
        block_at: blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.start, i))
            .collect(),
        cfg,
        facts: FlowFacts {
            sites: vec![SiteInfo::default(); stream.code.len()],
            ..Default::default()
        },
        states: HashMap::new(),
        queue: VecDeque::new(),
        queued: Default::default(),
    };
    if !blocks.is_empty() {
        let ctx = Ctx {
            owner: PROLOGUE,
            frames: Vec::new(),
        };
        ex.propagate(
            0,
            ctx,
            State {
                stack: Vec::new(),
                mem: Memory::default(),
            },
        );
    }
    let mut steps = 0usize;
    while let Some(key) = ex.queue.pop_front() {
        ex.queued.remove(&key);
        steps += 1;
        if steps > ex.cfg.budget {
            ex.facts.truncated = true;
            debug!(steps, "exploration budget exhausted");
            break;
        }
        let state = ex.states[&key].clone();
        ex.run_block(key.0, &key.1, state);
    }
    ex.facts
}

fn u(v: u64) -> U256 {
    U256::from(v)
}

fn to_u32(v: U256) -> Option<u32> {
    u32::try_from(v).ok()
}

impl<'a> Explorer<'a> {
    fn propagate(&mut self, block: usize, ctx: Ctx, state: State) {
        let key = (block, ctx);
        let changed = match self.states.get(&key) {
            None => {
                self.states.insert(key.clone(), state);
                true
            }
            Some(old) => {
                let joined = old.join(&state);
                if joined != *old {
                    self.states.insert(key.clone(), joined);
                    true
                } else {
                    false
                }
            }
        };
        if changed && self.queued.insert(key.clone()) {
            self.queue.push_back(key);
        }
    }

    fn pop(&self, st: &mut State) -> AbsValue {
        st.stack.pop().unwrap_or_else(AbsValue::top)
    }

    fn push(&self, st: &mut State, v: AbsValue) {
        if st.stack.len() >= self.cfg.stack_limit {
            st.stack.remove(0);
        }
        st.stack.push(v);
    }

    fn peek_operands(&self, st: &State, n: usize) -> Vec<AbsValue> {
        (0..n)
            .map(|i| {
                st.stack
                    .len()
                    .checked_sub(1 + i)
                    .map(|j| st.stack[j].clone())
                    .unwrap_or_else(AbsValue::top)
            })
            .collect()
    }

    fn record_site(&mut self, idx: usize, ctx: &Ctx, operands: &[AbsValue]) {
        let s = &mut self.facts.sites[idx];
        if s.visited {
            for (a, b) in s.operands.iter_mut().zip(operands) {
                *a = a.join(b);
            }
        } else {
            s.visited = true;
            s.operands = operands.to_vec();
        }
        if ctx.owner != PROLOGUE {
            s.owners.insert(ctx.owner);
        }
        for o in ctx.stack_owners() {
            if o != PROLOGUE {
                s.stack_owners.insert(o);
            }
        }
    }

    fn dfg_from(&mut self, operands: &[AbsValue], site: usize) {
        for (i, v) in operands.iter().enumerate() {
            for &d in &v.defs {
                self.facts.dfg.insert(DfgEdge {
                    from: d,
                    to: site,
                    operand: i as u8,
                });
            }
        }
    }

    fn dfg_mem(&mut self, writers: &BTreeSet<usize>, site: usize) {
        for &d in writers {
            self.facts.dfg.insert(DfgEdge {
                from: d,
                to: site,
                operand: MEM_OPERAND,
            });
        }
    }

    fn fresh(&self, site: usize, ctx: &Ctx, operands: &[AbsValue]) -> AbsValue {
        let mut v = AbsValue::top();
        v.defs.insert(site);
        v.frame = ctx.depth();
        for o in operands {
            v.taint.extend(o.taint.iter().cloned());
        }
        v
    }

    fn slot_of(key: &AbsValue) -> Slot {
        if let Some(k) = key.konst {
            Slot::Constant(k)
        } else if let Some(b) = key.mapping_base {
            Slot::Hashed(b)
        } else {
            Slot::Opaque
        }
    }

    fn run_block(&mut self, b: usize, ctx: &Ctx, mut st: State) {
        let span = self.blocks[b].clone();
        let mut jump_ops: Option<Vec<AbsValue>> = None;
        for idx in span.ins.clone() {
            let ins = &self.stream.code[idx];
            let op = ins.opcode;
            let operands = self.peek_operands(&st, op.pops());
            self.record_site(idx, ctx, &operands);
            if op == Opcode::JUMP || op == Opcode::JUMPI {
                for _ in 0..op.pops() {
                    self.pop(&mut st);
                }
                jump_ops = Some(operands);
                break;
            }
            self.step(idx, ctx, &mut st, &operands);
            if op.is_halting() {
                return;
            }
        }
        let last_idx = span.ins.end.saturating_sub(1);
        let last = &self.stream.code[last_idx];
        match jump_ops {
            Some(ops) if last.opcode == Opcode::JUMP => {
                self.on_jump(b, last.offset, ctx, st, &ops[0])
            }
            Some(ops) => self.on_jumpi(b, last.offset, ctx, st, &ops[0], &ops[1]),
            None => {
                if b + 1 < self.blocks.len() {
                    self.facts
                        .edges
                        .insert((b, Some(b + 1), EdgeKind::Fallthrough));
                    self.propagate(b + 1, ctx.clone(), st);
                }
            }
        }
    }

    fn jumpdest_block(&self, target: &AbsValue) -> Option<(usize, usize)> {
        let t = target.konst_usize()?;
        if !self.stream.is_jumpdest(t) {
            return None;
        }
        self.block_at.get(&t).map(|&b| (t, b))
    }

    fn note_jump(&mut self, site: usize, kind: JumpKind, target: usize) {
        self.facts
            .jumps
            .entry(site)
            .or_default()
            .insert((kind, target));
    }

    fn on_jump(&mut self, b: usize, site: usize, ctx: &Ctx, st: State, target: &AbsValue) {
        let Some((t, tb)) = self.jumpdest_block(target) else {
            self.facts.edges.insert((b, None, EdgeKind::Jump));
            self.note_jump(site, JumpKind::Unresolved, usize::MAX);
            return;
        };
        if let Some(top) = ctx.frames.last() {
            if top.ret == t {
                let mut frames = ctx.frames.clone();
                let f = frames.pop().expect("non-empty");
                self.facts.edges.insert((b, Some(tb), EdgeKind::CallReturn));
                self.note_jump(site, JumpKind::Return, t);
                self.propagate(
                    tb,
                    Ctx {
                        owner: f.owner,
                        frames,
                    },
                    st,
                );
                return;
            }
        }
        let depth = ctx.depth();
        let ret_pos = st.stack.iter().rposition(|v| {
            v.pushed
                && v.frame == depth
                && v.konst_usize()
                    .is_some_and(|k| k != t && self.stream.is_jumpdest(k))
        });
        self.facts.edges.insert((b, Some(tb), EdgeKind::Jump));
        match ret_pos {
            Some(p) => {
                let ret = st.stack[p].konst_usize().expect("constant");
                let args = st.stack[p + 1..].to_vec();
                let entry = self
                    .facts
                    .calls
                    .entry((site, t))
                    .or_insert_with(|| CallSite {
                        site,
                        target: t,
                        ret,
                        args: args.clone(),
                        callers: BTreeSet::new(),
                    });
                if entry.args.len() == args.len() {
                    for (a, x) in entry.args.iter_mut().zip(&args) {
                        *a = a.join(x);
                    }
                }
                entry.callers.insert(ctx.owner);
                self.note_jump(site, JumpKind::Call, t);
                let mut frames = ctx.frames.clone();
                if frames.len() >= self.cfg.max_call_depth {
                    frames.remove(0);
                }
                frames.push(Frame {
                    ret,
                    owner: ctx.owner,
                });
                self.propagate(tb, Ctx { owner: t, frames }, st);
            }
            None => {
                self.note_jump(site, JumpKind::Plain, t);
                self.propagate(tb, ctx.clone(), st);
            }
        }
    }

    fn on_jumpi(
        &mut self,
        b: usize,
        site: usize,
        ctx: &Ctx,
        st: State,
        target: &AbsValue,
        cond: &AbsValue,
    ) {
        let taken_possible = cond.konst.is_none_or(|c| c != U256::ZERO);
        let fall_possible = cond.konst.is_none_or(|c| c == U256::ZERO);
        if taken_possible {
            match self.jumpdest_block(target) {
                Some((t, tb)) => {
                    self.facts
                        .edges
                        .insert((b, Some(tb), EdgeKind::BranchTaken));
                    self.note_jump(site, JumpKind::Plain, t);
                    let mut next = ctx.clone();
                    if ctx.owner == PROLOGUE && ctx.frames.is_empty() {
                        if let Some(sel) = cond.selector_eq {
                            self.facts.public_entries.entry(sel).or_insert(t);
                            next.owner = t;
                        }
                    }
                    self.propagate(tb, next, st.clone());
                }
                None => {
                    self.facts.edges.insert((b, None, EdgeKind::BranchTaken));
                    self.note_jump(site, JumpKind::Unresolved, usize::MAX);
                }
            }
        }
        if fall_possible && b + 1 < self.blocks.len() {
            self.facts
                .edges
                .insert((b, Some(b + 1), EdgeKind::Fallthrough));
            self.propagate(b + 1, ctx.clone(), st);
        }
    }

    fn step(&mut self, idx: usize, ctx: &Ctx, st: &mut State, operands: &[AbsValue]) {
        let ins = &self.stream.code[idx];
        let op = ins.opcode;
        let site = ins.offset;
        if op.is_push() {
            let mut v = AbsValue::constant(ins.push_value().expect("push"));
            v.defs.insert(site);
            v.pushed = true;
            v.frame = ctx.depth();
            self.push(st, v);
            return;
        }
        if op.is_dup() {
            let n = (op.0 - 0x80) as usize + 1;
            let v = operands[n - 1].clone();
            self.push(st, v);
            return;
        }
        if op.is_swap() {
            let n = (op.0 - 0x90) as usize + 1;
            let len = st.stack.len();
            if len > n {
                st.stack.swap(len - 1, len - 1 - n);
            } else if len > 0 {
                st.stack[len - 1] = AbsValue::top();
            }
            return;
        }
        for _ in 0..op.pops() {
            self.pop(st);
        }
        match op {
            Opcode::POP | Opcode::JUMPDEST | Opcode::STOP | Opcode::INVALID => {}
            Opcode::MSTORE | Opcode::MSTORE8 => {
                self.dfg_from(operands, site);
                let mut cell = operands[1].clone();
                cell.defs = BTreeSet::from([site]);
                let len = if op == Opcode::MSTORE { 32 } else { 1 };
                if op == Opcode::MSTORE8 {
                    cell.konst = None;
                }
                st.mem
                    .write(&operands[0], &AbsValue::constant(u(len)), cell);
            }
            Opcode::MLOAD => {
                let read = st.mem.read(&operands[0], &AbsValue::constant(u(32)));
                self.dfg_from(operands, site);
                self.dfg_mem(&read.value.defs, site);
                let mut v = self.fresh(site, ctx, operands);
                v.taint.extend(read.value.taint.iter().cloned());
                v.compared = read.value.compared;
                v.tautology = read.exact && read.value.tautology;
                if read.exact {
                    v.konst = read.value.konst;
                    v.mapping_base = read.value.mapping_base;
                }
                self.push(st, v);
            }
            Opcode::KECCAK256 => {
                let read = st.mem.read(&operands[0], &operands[1]);
                self.dfg_from(operands, site);
                self.dfg_mem(&read.value.defs, site);
                let mut v = self.fresh(site, ctx, operands);
                v.taint.extend(read.value.taint.iter().cloned());
                if operands[0].konst == Some(U256::ZERO) && operands[1].konst == Some(u(0x40)) {
                    if let (Some(_), Some(base)) = (st.mem.word_at(0), st.mem.word_at(0x20)) {
                        v.mapping_base = base.konst;
                    }
                }
                self.push(st, v);
            }
            Opcode::CALLDATACOPY
            | Opcode::CODECOPY
            | Opcode::RETURNDATACOPY
            | Opcode::EXTCODECOPY
            | Opcode::MCOPY => {
                self.dfg_from(operands, site);
                let (dest, src, len) = if op == Opcode::EXTCODECOPY {
                    (&operands[1], &operands[2], &operands[3])
                } else {
                    (&operands[0], &operands[1], &operands[2])
                };
                let mut cell = self.fresh(site, ctx, operands);
                if op == Opcode::CALLDATACOPY {
                    cell.taint.insert(Label::Source {
                        site,
                        op,
                        arg: src.konst,
                    });
                }
                if op == Opcode::MCOPY {
                    let read = st.mem.read(src, len);
                    self.dfg_mem(&read.value.defs, site);
                    cell.taint.extend(read.value.taint.iter().cloned());
                }
                st.mem.write(dest, len, cell);
            }
            Opcode::SLOAD => {
                let slot = Self::slot_of(&operands[0]);
                self.facts
                    .storage
                    .entry((site, AccessKind::Read, slot.clone()))
                    .or_default()
                    .extend(ctx.stack_owners().filter(|&o| o != PROLOGUE));
                self.dfg_from(operands, site);
                let mut v = self.fresh(site, ctx, operands);
                // A sender-keyed mapping entry is not the sender.
                v.taint.retain(|l| !l.is_caller());
                if let Slot::Constant(k) = slot {
                    v.taint.insert(Label::Storage(k));
                }
                self.push(st, v);
            }
            Opcode::SSTORE => {
                let slot = Self::slot_of(&operands[0]);
                self.facts
                    .storage
                    .entry((site, AccessKind::Write, slot))
                    .or_default()
                    .extend(ctx.stack_owners().filter(|&o| o != PROLOGUE));
                self.dfg_from(operands, site);
            }
            Opcode::CALLER | Opcode::CALLVALUE | Opcode::CALLDATASIZE => {
                let mut v = self.fresh(site, ctx, operands);
                v.taint.insert(Label::Source {
                    site,
                    op,
                    arg: None,
                });
                self.push(st, v);
            }
            Opcode::CALLDATALOAD => {
                self.dfg_from(operands, site);
                let mut v = self.fresh(site, ctx, operands);
                v.taint.insert(Label::Source {
                    site,
                    op,
                    arg: operands[0].konst,
                });
                v.calldata_head = operands[0].konst == Some(U256::ZERO);
                self.push(st, v);
            }
            Opcode::CALL | Opcode::CALLCODE | Opcode::DELEGATECALL | Opcode::STATICCALL => {
                let with_value = matches!(op, Opcode::CALL | Opcode::CALLCODE);
                let (ai, al, ro, rl) = if with_value {
                    (3, 4, 5, 6)
                } else {
                    (2, 3, 4, 5)
                };
                let read = st.mem.read(&operands[ai], &operands[al]);
                self.dfg_from(operands, site);
                self.dfg_mem(&read.value.defs, site);
                let mut out = self.fresh(site, ctx, operands);
                out.taint.extend(read.value.taint.iter().cloned());
                if op == Opcode::CALLCODE {
                    out.taint.insert(Label::Source {
                        site,
                        op,
                        arg: None,
                    });
                }
                st.mem.write(&operands[ro], &operands[rl], out.clone());
                self.push(st, out);
            }
            Opcode::RETURN | Opcode::REVERT | Opcode::LOG0 | Opcode::CREATE | Opcode::CREATE2 => {
                self.generic_read(idx, ctx, st, operands);
            }
            _ if op.is_log() => self.generic_read(idx, ctx, st, operands),
            _ => {
                self.dfg_from(operands, site);
                let mut v = self.fresh(site, ctx, operands);
                fold(op, operands, &mut v, site);
                for _ in 0..op.pushes() {
                    self.push(st, v.clone());
                }
            }
        }
    }

    /// Ops that read a memory range `(offset, len)` given by their first
    /// two stack operands (after the value operand for CREATE/CREATE2).
    fn generic_read(&mut self, idx: usize, ctx: &Ctx, st: &mut State, operands: &[AbsValue]) {
        let ins = &self.stream.code[idx];
        let op = ins.opcode;
        let site = ins.offset;
        let (o, l) = if matches!(op, Opcode::CREATE | Opcode::CREATE2) {
            (1, 2)
        } else {
            (0, 1)
        };
        let read = st.mem.read(&operands[o], &operands[l]);
        self.dfg_from(operands, site);
        self.dfg_mem(&read.value.defs, site);
        if op.pushes() > 0 {
            let mut v = self.fresh(site, ctx, operands);
            v.taint.extend(read.value.taint.iter().cloned());
            self.push(st, v);
        }
    }
}

/// Constant folding and flag propagation for pure stack operations.
fn fold(op: Opcode, ops: &[AbsValue], v: &mut AbsValue, _site: usize) {
    let k = |i: usize| ops.get(i).and_then(|x| x.konst);
    let is_cmp = matches!(
        op,
        Opcode::LT | Opcode::GT | Opcode::SLT | Opcode::SGT | Opcode::EQ | Opcode::ISZERO
    );
    let self_check = matches!(
        op,
        Opcode::LT | Opcode::GT | Opcode::SLT | Opcode::SGT | Opcode::EQ
    ) && ops.len() == 2
        && ops[0].konst.is_none()
        && ops[1].konst.is_none()
        && !ops[0].taint.is_empty()
        && ops[0].taint == ops[1].taint;
    v.tautology = self_check || (op == Opcode::ISZERO && ops.first().is_some_and(|x| x.tautology));
    v.compared = !v.tautology && (is_cmp || ops.iter().any(|x| x.compared));
    let b = |x: bool| if x { U256::from(1) } else { U256::ZERO };
    v.konst = match op {
        Opcode::ADD => k(0).zip(k(1)).map(|(a, c)| a.wrapping_add(c)),
        Opcode::SUB => k(0).zip(k(1)).map(|(a, c)| a.wrapping_sub(c)),
        Opcode::MUL => k(0).zip(k(1)).map(|(a, c)| a.wrapping_mul(c)),
        Opcode::DIV => k(0)
            .zip(k(1))
            .map(|(a, c)| if c.is_zero() { U256::ZERO } else { a / c }),
        Opcode::MOD => k(0)
            .zip(k(1))
            .map(|(a, c)| if c.is_zero() { U256::ZERO } else { a % c }),
        Opcode::EXP => k(0).zip(k(1)).map(|(a, c)| a.wrapping_pow(c)),
        Opcode::AND => k(0).zip(k(1)).map(|(a, c)| a & c),
        Opcode::OR => k(0).zip(k(1)).map(|(a, c)| a | c),
        Opcode::XOR => k(0).zip(k(1)).map(|(a, c)| a ^ c),
        Opcode::NOT => k(0).map(|a| !a),
        Opcode::SHL => k(0).zip(k(1)).map(|(s, a)| {
            if s >= U256::from(256) {
                U256::ZERO
            } else {
                a << s.to::<usize>()
            }
        }),
        Opcode::SHR => k(0).zip(k(1)).map(|(s, a)| {
            if s >= U256::from(256) {
                U256::ZERO
            } else {
                a >> s.to::<usize>()
            }
        }),
        Opcode::LT => k(0).zip(k(1)).map(|(a, c)| b(a < c)),
        Opcode::GT => k(0).zip(k(1)).map(|(a, c)| b(a > c)),
        Opcode::EQ => k(0).zip(k(1)).map(|(a, c)| b(a == c)),
        Opcode::ISZERO => k(0).map(|a| b(a.is_zero())),
        _ => None,
    };
    let sel = |i: usize| ops.get(i).is_some_and(|x| x.selector);
    let head = |i: usize| ops.get(i).is_some_and(|x| x.calldata_head);
    v.selector = match op {
        Opcode::SHR => head(1) && k(0) == Some(U256::from(224)),
        Opcode::DIV => head(0) && k(1) == Some(U256::from(1) << 224),
        Opcode::AND => {
            (sel(0) && k(1) == Some(U256::from(0xffff_ffffu64)))
                || (sel(1) && k(0) == Some(U256::from(0xffff_ffffu64)))
        }
        _ => false,
    };
    if op == Opcode::EQ {
        v.selector_eq = if sel(0) {
            k(1).and_then(to_u32)
        } else if sel(1) {
            k(0).and_then(to_u32)
        } else {
            None
        };
    }
}
