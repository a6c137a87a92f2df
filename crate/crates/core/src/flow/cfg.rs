//! Basic blocks and the control-flow graph.

use super::explore::{self, BlockSpan, EdgeKind, ExploreConfig, FlowFacts};
use crate::bytecode::{Instruction, InstructionStream, Opcode};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

pub type BlockId = usize;

#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub id: BlockId,
    pub start: usize,
    /// Exclusive end offset.
    pub end: usize,
    /// Instruction indices into the stream.
    pub ins: Range<usize>,
    pub successors: Vec<(BlockId, EdgeKind)>,
}

#[derive(Debug, Clone)]
pub struct ControlFlowGraph {
    pub stream: InstructionStream,
    /// Real blocks followed by one virtual UNKNOWN block.
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
    pub unknown: BlockId,
    pub public_entries: BTreeMap<u32, BlockId>,
    pub facts: FlowFacts,
}

impl ControlFlowGraph {
    pub fn instructions(&self, b: BlockId) -> &[Instruction] {
        &self.stream.code[self.blocks[b].ins.clone()]
    }

    pub fn block_at(&self, offset: usize) -> Option<BlockId> {
        let real = &self.blocks[..self.unknown];
        real.binary_search_by(|b| {
            if offset < b.start {
                std::cmp::Ordering::Greater
            } else if offset >= b.end {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Equal
            }
        })
        .ok()
    }

    pub fn block_starting_at(&self, offset: usize) -> Option<BlockId> {
        self.block_at(offset)
            .filter(|&b| self.blocks[b].start == offset)
    }

    /// Blocks reached by the exploration, in id order.
    pub fn reachable_blocks(&self) -> Vec<BlockId> {
        (0..self.unknown)
            .filter(|&b| {
                let r = &self.blocks[b].ins;
                !r.is_empty() && self.facts.sites[r.start].visited
            })
            .collect()
    }

    pub fn is_reached(&self, offset: usize) -> bool {
        self.stream
            .index_of(offset)
            .is_some_and(|i| self.facts.sites[i].visited)
    }

    pub fn last_instruction(&self, b: BlockId) -> Option<&Instruction> {
        let r = &self.blocks[b].ins;
        if r.is_empty() {
            None
        } else {
            Some(&self.stream.code[r.end - 1])
        }
    }

    /// `blockN -> blockM kind` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            for (s, k) in &b.successors {
                let _ = writeln!(out, "block{} -> block{} {}", b.id, s, k.as_str());
            }
        }
        out
    }
}

/// Split the stream at JUMPDESTs and after terminators.
pub fn split_blocks(stream: &InstructionStream) -> Vec<BlockSpan> {
    let mut spans = Vec::new();
    let mut start = 0usize;
    for (i, ins) in stream.code.iter().enumerate() {
        if i > start && ins.opcode == Opcode::JUMPDEST {
            spans.push(BlockSpan {
                start: stream.code[start].offset,
                ins: start..i,
            });
            start = i;
        }
        if ins.opcode.is_terminator() {
            spans.push(BlockSpan {
                start: stream.code[start].offset,
                ins: start..i + 1,
            });
            start = i + 1;
        }
    }
    if start < stream.code.len() {
        spans.push(BlockSpan {
            start: stream.code[start].offset,
            ins: start..stream.code.len(),
        });
    }
    spans
}

pub fn build_cfg(stream: InstructionStream) -> ControlFlowGraph {
    build_cfg_with(stream, ExploreConfig::default())
}

pub fn build_cfg_with(stream: InstructionStream, config: ExploreConfig) -> ControlFlowGraph {
    let spans = split_blocks(&stream);
    let facts = explore::explore(&stream, &spans, config);
    let mut blocks: Vec<BasicBlock> = spans
        .iter()
        .enumerate()
        .map(|(id, s)| BasicBlock {
            id,
            start: s.start,
            end: stream.code[s.ins.end - 1].next_offset(),
            ins: s.ins.clone(),
            successors: Vec::new(),
        })
        .collect();
    let unknown = blocks.len();
    blocks.push(BasicBlock {
        id: unknown,
        start: stream.code_len,
        end: stream.code_len,
        ins: stream.code.len()..stream.code.len(),
        successors: Vec::new(),
    });
    for &(from, to, kind) in &facts.edges {
        let to = to.unwrap_or(unknown);
        if !blocks[from].successors.contains(&(to, kind)) {
            blocks[from].successors.push((to, kind));
        }
    }
    for b in &mut blocks {
        b.successors.sort();
    }
    let by_start: BTreeMap<usize, BlockId> =
        blocks[..unknown].iter().map(|b| (b.start, b.id)).collect();
    let public_entries = facts
        .public_entries
        .iter()
        .filter_map(|(&sel, off)| by_start.get(off).map(|&b| (sel, b)))
        .collect();
    ControlFlowGraph {
        stream,
        blocks,
        entry: 0,
        unknown,
        public_entries,
        facts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::decode;

    #[test]
    fn constant_jump_two_reachable_blocks() {
        // PUSH1 0x04, JUMP, STOP, JUMPDEST, STOP
        let cfg = build_cfg(decode(&[0x60, 0x04, 0x56, 0x00, 0x5b, 0x00]).unwrap());
        let reach = cfg.reachable_blocks();
        assert_eq!(reach.len(), 2);
        let b4 = cfg.block_starting_at(4).unwrap();
        assert_eq!(cfg.blocks[0].successors, vec![(b4, EdgeKind::Jump)]);
        assert_eq!(cfg.dump(), format!("block0 -> block{b4} jump\n"));
    }

    #[test]
    fn dynamic_jump_goes_to_unknown() {
        // CALLDATALOAD(0) JUMP
        let cfg = build_cfg(decode(&[0x5f, 0x35, 0x56]).unwrap());
        assert_eq!(
            cfg.blocks[0].successors,
            vec![(cfg.unknown, EdgeKind::Jump)]
        );
    }

    #[test]
    fn jump_to_non_jumpdest_is_unresolved() {
        let cfg = build_cfg(decode(&[0x60, 0x03, 0x56, 0x00]).unwrap());
        assert_eq!(
            cfg.blocks[0].successors,
            vec![(cfg.unknown, EdgeKind::Jump)]
        );
    }

    #[test]
    fn block_invariants() {
        let code = [
            0x60, 0x01, 0x60, 0x08, 0x57, 0x00, 0x00, 0x00, 0x5b, 0x5b, 0x00,
        ];
        let cfg = build_cfg(decode(&code).unwrap());
        for b in &cfg.blocks[..cfg.unknown] {
            let ins = cfg.instructions(b.id);
            for (i, x) in ins.iter().enumerate() {
                if i > 0 {
                    assert_ne!(x.opcode, Opcode::JUMPDEST);
                }
                if i + 1 < ins.len() {
                    assert!(!x.opcode.is_terminator());
                }
            }
        }
    }

    #[test]
    fn one_selector_dispatcher() {
        // PUSH0 CALLDATALOAD PUSH1 0xe0 SHR PUSH4 a9059cbb EQ PUSH1 0x11 JUMPI STOP
        // 0x11: JUMPDEST STOP
        let mut code = vec![
            0x5f, 0x35, 0x60, 0xe0, 0x1c, 0x63, 0xa9, 0x05, 0x9c, 0xbb, 0x14, 0x60,
        ];
        code.push(0x10);
        code.extend_from_slice(&[0x57, 0x00, 0x00, 0x5b, 0x00]);
        let stream = decode(&code).unwrap();
        assert_eq!(
            stream
                .code
                .iter()
                .find(|i| i.opcode == Opcode::JUMPDEST)
                .unwrap()
                .offset,
            0x10
        );
        let cfg = build_cfg(stream);
        let b = cfg.block_starting_at(0x10).unwrap();
        assert_eq!(cfg.public_entries.get(&0xa9059cbb), Some(&b));
        assert_eq!(cfg.public_entries.len(), 1);
    }
}
