//! Minimal label-resolving assembler for hand-built test programs.

use crate::bytecode::Opcode;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub enum Item {
    Op(Opcode),
    /// Minimal-width push of a constant (PUSH0 for zero).
    Push(u128),
    PushN(usize, Vec<u8>),
    /// PUSH2 of a label's offset.
    Ref(&'static str),
    Label(&'static str),
    Raw(Vec<u8>),
}

pub use Item::*;

/// Shorthand for `Item::Op`.
pub fn op(o: Opcode) -> Item {
    Item::Op(o)
}

fn push_bytes(v: u128) -> Vec<u8> {
    if v == 0 {
        return vec![Opcode::PUSH0.0];
    }
    let bytes = v.to_be_bytes();
    let skip = bytes.iter().take_while(|&&b| b == 0).count();
    let body = &bytes[skip..];
    let mut out = vec![0x5f + body.len() as u8];
    out.extend_from_slice(body);
    out
}

fn size(item: &Item) -> usize {
    match item {
        Op(_) => 1,
        Push(v) => push_bytes(*v).len(),
        PushN(n, _) => 1 + n,
        Ref(_) => 3,
        Label(_) => 0,
        Raw(b) => b.len(),
    }
}

/// Assemble `items`, resolving `Ref` against `Label` positions.
///
/// Labels do not emit a JUMPDEST; write `Label("x"), op(JUMPDEST)`.
pub fn assemble(items: &[Item]) -> Vec<u8> {
    let mut labels = HashMap::new();
    let mut pc = 0;
    for it in items {
        if let Label(name) = it {
            labels.insert(*name, pc);
        }
        pc += size(it);
    }
    let mut out = Vec::with_capacity(pc);
    for it in items {
        match it {
            Op(o) => out.push(o.0),
            Push(v) => out.extend(push_bytes(*v)),
            PushN(n, bytes) => {
                out.push(0x5f + *n as u8);
                let mut b = vec![0u8; *n];
                let k = bytes.len().min(*n);
                b[n - k..].copy_from_slice(&bytes[bytes.len() - k..]);
                out.extend(b);
            }
            Ref(name) => {
                let at = *labels
                    .get(name)
                    .unwrap_or_else(|| panic!("undefined label {name}"));
                out.push(Opcode::PUSH2.0);
                out.extend_from_slice(&(at as u16).to_be_bytes());
            }
            Label(_) => {}
            Raw(b) => out.extend_from_slice(b),
        }
    }
    out
}
