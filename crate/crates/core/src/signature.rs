//! Opcode feature signatures.

use crate::boundary::MethodRegion;
use crate::bytecode::Opcode;
use crate::flow::callgraph::call_chains;
use crate::flow::{CallGraphEdge, ControlFlowGraph};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSymbol {
    R,
    W,
    C0,
    C1,
    I,
    Re,
    E0,
    M1,
    M2,
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
    P9,
}

use FeatureSymbol as F;

impl FeatureSymbol {
    pub const ALL: [FeatureSymbol; 18] = [
        F::R,
        F::W,
        F::C0,
        F::C1,
        F::I,
        F::Re,
        F::E0,
        F::M1,
        F::M2,
        F::P1,
        F::P2,
        F::P3,
        F::P4,
        F::P5,
        F::P6,
        F::P7,
        F::P8,
        F::P9,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            F::R => "R",
            F::W => "W",
            F::C0 => "C0",
            F::C1 => "C1",
            F::I => "I",
            F::Re => "Re",
            F::E0 => "E0",
            F::M1 => "M1",
            F::M2 => "M2",
            F::P1 => "P1",
            F::P2 => "P2",
            F::P3 => "P3",
            F::P4 => "P4",
            F::P5 => "P5",
            F::P6 => "P6",
            F::P7 => "P7",
            F::P8 => "P8",
            F::P9 => "P9",
        }
    }

    /// Precompile symbol for address 1..=9.
    pub fn precompile(addr: u64) -> Option<FeatureSymbol> {
        (1..=9)
            .contains(&addr)
            .then(|| F::ALL[F::P1.index() + addr as usize - 1])
    }

    /// Plain opcode mapping, without context.
    pub fn of_opcode(op: Opcode) -> Option<FeatureSymbol> {
        Some(match op {
            Opcode::MLOAD | Opcode::SLOAD => F::R,
            Opcode::MSTORE | Opcode::SSTORE => F::W,
            Opcode::JUMP
            | Opcode::JUMPI
            | Opcode::JUMPDEST
            | Opcode::CALL
            | Opcode::STATICCALL
            | Opcode::DELEGATECALL => F::C0,
            Opcode::CALLER
            | Opcode::CALLDATASIZE
            | Opcode::CALLDATALOAD
            | Opcode::CALLVALUE
            | Opcode::CALLDATACOPY
            | Opcode::CALLCODE => F::C1,
            Opcode::LT | Opcode::GT | Opcode::SLT | Opcode::SGT | Opcode::EQ | Opcode::ISZERO => {
                F::I
            }
            Opcode::RETURNDATASIZE | Opcode::RETURN | Opcode::RETURNDATACOPY => F::Re,
            op if op.is_log() => F::E0,
            Opcode::REVERT => F::M1,
            Opcode::GAS | Opcode::GASPRICE | Opcode::GASLIMIT => F::M2,
            _ => return None,
        })
    }
}

impl fmt::Display for FeatureSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid symbol {token:?}")]
pub struct InvalidSymbol {
    pub token: String,
}

impl FromStr for FeatureSymbol {
    type Err = InvalidSymbol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        F::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| InvalidSymbol {
                token: s.to_string(),
            })
    }
}

/// Space-separated tokens.
pub fn parse_symbols(s: &str) -> Result<Vec<FeatureSymbol>, InvalidSymbol> {
    s.split_whitespace().map(str::parse).collect()
}

pub fn format_symbols(s: &[FeatureSymbol]) -> String {
    let mut out = String::with_capacity(s.len() * 3);
    for (i, f) in s.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(f.as_str());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodSignature {
    pub region_id: usize,
    #[serde(serialize_with = "ser_symbols")]
    pub intra: Vec<FeatureSymbol>,
    #[serde(serialize_with = "ser_symbols")]
    pub chain: Vec<FeatureSymbol>,
}

fn ser_symbols<S: serde::Serializer>(v: &[FeatureSymbol], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_symbols(v))
}

impl MethodSignature {
    /// `region_id\tintra\tchain`.
    pub fn dump_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.region_id,
            format_symbols(&self.intra),
            format_symbols(&self.chain)
        )
    }
}

/// Symbol for one instruction in context: return jumps become Re and calls
/// to a constant precompile address become P1..P9.
pub fn symbol_at(cfg: &ControlFlowGraph, index: usize) -> Option<FeatureSymbol> {
    let ins = &cfg.stream.code[index];
    match ins.opcode {
        Opcode::JUMP if cfg.facts.is_return_jump(ins.offset) => Some(F::Re),
        Opcode::CALL | Opcode::STATICCALL => {
            let target = cfg.facts.sites[index].operands.get(1).and_then(|v| v.konst);
            let p = target
                .filter(|t| t.bit_len() <= 64)
                .and_then(|t| FeatureSymbol::precompile(t.as_limbs()[0]));
            Some(p.unwrap_or(F::C0))
        }
        op => FeatureSymbol::of_opcode(op),
    }
}

pub fn extract_intra(region: &MethodRegion, cfg: &ControlFlowGraph) -> Vec<FeatureSymbol> {
    let code = &cfg.stream.code;
    let first = code.partition_point(|i| i.offset < region.start);
    code[first..]
        .iter()
        .take_while(|i| i.offset < region.end)
        .enumerate()
        .filter_map(|(k, _)| symbol_at(cfg, first + k))
        .collect()
}

/// `intra(root)` followed by the intra sequence of the last member of each
/// chain, chains taken in lexicographic order.
pub fn extract_chain(
    root: usize,
    chains: &[Vec<usize>],
    intra_map: &BTreeMap<usize, Vec<FeatureSymbol>>,
) -> Vec<FeatureSymbol> {
    let mut out = intra_map.get(&root).cloned().unwrap_or_default();
    let mut sorted: Vec<&Vec<usize>> = chains.iter().filter(|c| c.len() >= 2).collect();
    sorted.sort();
    for c in sorted {
        if let Some(s) = c.last().and_then(|m| intra_map.get(m)) {
            out.extend_from_slice(s);
        }
    }
    out
}

pub fn extract_signatures(
    cfg: &ControlFlowGraph,
    regions: &[MethodRegion],
    edges: &[CallGraphEdge],
    max_depth: usize,
) -> Vec<MethodSignature> {
    let intra_map: BTreeMap<usize, Vec<FeatureSymbol>> = regions
        .par_iter()
        .map(|r| (r.id, extract_intra(r, cfg)))
        .collect();
    regions
        .par_iter()
        .map(|r| {
            let chains = call_chains(edges, r.id, max_depth);
            MethodSignature {
                region_id: r.id,
                intra: intra_map[&r.id].clone(),
                chain: extract_chain(r.id, &chains, &intra_map),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::*;
    use crate::boundary::{LabelSource, RegionKind};
    use crate::bytecode::{decode, Opcode as O};
    use crate::flow::build_cfg;

    fn whole(code: &[u8]) -> MethodRegion {
        MethodRegion {
            id: 0,
            start: 0,
            end: code.len(),
            kind: RegionKind::Internal,
            selector: None,
            source: LabelSource::Heuristic,
            owner: 0,
        }
    }

    fn intra(items: &[Item]) -> Vec<FeatureSymbol> {
        let code = assemble(items);
        let cfg = build_cfg(decode(&code).unwrap());
        extract_intra(&whole(&code), &cfg)
    }

    #[test]
    fn storage_round_trip() {
        let s = intra(&[Push(0), op(O::SLOAD), Push(0), op(O::SSTORE), op(O::STOP)]);
        assert_eq!(s, vec![F::R, F::W]);
    }

    #[test]
    fn access_control_idiom() {
        let s = intra(&[
            op(O::CALLER),
            op(O::ISZERO),
            Ref("ok"),
            op(O::JUMPI),
            Push(0),
            Push(0),
            op(O::REVERT),
            Label("ok"),
            op(O::JUMPDEST),
            op(O::STOP),
        ]);
        assert_eq!(s, vec![F::C1, F::I, F::C0, F::M1, F::C0]);
    }

    #[test]
    fn precompile_call() {
        let s = intra(&[
            Push(0x20),
            Push(0),
            Push(0x80),
            Push(0),
            Push(1),
            op(O::GAS),
            op(O::STATICCALL),
            op(O::STOP),
        ]);
        assert_eq!(s, vec![F::M2, F::P1]);
    }

    #[test]
    fn non_constant_target_is_c0() {
        let s = intra(&[
            Push(0x20),
            Push(0),
            Push(0x80),
            Push(0),
            Push(0),
            op(O::CALLDATALOAD),
            op(O::GAS),
            op(O::STATICCALL),
            op(O::STOP),
        ]);
        assert_eq!(s, vec![F::C1, F::M2, F::C0]);
    }

    #[test]
    fn return_jump_is_re() {
        let s = intra(&[
            Ref("ret"),
            Ref("f"),
            op(O::JUMP),
            Label("ret"),
            op(O::JUMPDEST),
            op(O::STOP),
            Label("f"),
            op(O::JUMPDEST),
            op(O::JUMP),
        ]);
        assert_eq!(s, vec![F::C0, F::C0, F::C0, F::Re]);
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(
            parse_symbols("R W I M1").unwrap(),
            vec![F::R, F::W, F::I, F::M1]
        );
        assert_eq!(parse_symbols("R X").unwrap_err().token, "X");
        assert_eq!(parse_symbols("").unwrap(), vec![]);
        let all = format_symbols(&F::ALL);
        assert_eq!(parse_symbols(&all).unwrap(), F::ALL.to_vec());
    }

    #[test]
    fn precompile_range() {
        assert_eq!(FeatureSymbol::precompile(0), None);
        assert_eq!(FeatureSymbol::precompile(1), Some(F::P1));
        assert_eq!(FeatureSymbol::precompile(9), Some(F::P9));
        assert_eq!(FeatureSymbol::precompile(10), None);
    }

    #[test]
    fn chain_order() {
        let m = BTreeMap::from([(0, vec![F::R]), (1, vec![F::W]), (2, vec![F::I])]);
        assert_eq!(extract_chain(0, &[], &m), vec![F::R]);
        let chains = vec![vec![0, 2], vec![0, 1]];
        assert_eq!(extract_chain(0, &chains, &m), vec![F::R, F::W, F::I]);
    }
}
