//! Abstract stack values: constant-or-top with provenance.

use crate::bytecode::Opcode;
use ruint::aliases::U256;
use std::collections::BTreeSet;
use std::fmt;

/// Origin of attacker-influenced or storage-derived data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// A message-call instruction. `arg` is the constant calldata offset for
    /// CALLDATALOAD / CALLDATACOPY when known, which keeps distinct ABI
    /// parameters apart when they are decoded by a shared helper.
    Source {
        site: usize,
        op: Opcode,
        arg: Option<U256>,
    },
    /// Value loaded from a constant storage slot.
    Storage(U256),
}

impl Label {
    pub fn is_caller(&self) -> bool {
        matches!(self, Label::Source { op, .. } if *op == Opcode::CALLER)
    }

    /// Sources an external caller can choose freely. `msg.sender` is
    /// authenticated by the protocol and excluded.
    pub fn is_attacker_controlled(&self) -> bool {
        matches!(self, Label::Source { op, .. } if *op != Opcode::CALLER)
    }
}

/// Storage slot descriptor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Constant(U256),
    /// `keccak256(key ‖ base)`: an entry of the mapping declared at `base`.
    Hashed(U256),
    Opaque,
}

impl Slot {
    /// Structural equality used for common-slot tests; opaque never matches.
    pub fn same_as(&self, other: &Slot) -> bool {
        !matches!(self, Slot::Opaque) && self == other
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Constant(v) => write!(f, "slot {v}"),
            Slot::Hashed(b) => write!(f, "hash(base={b})"),
            Slot::Opaque => f.write_str("OPAQUE"),
        }
    }
}

/// Frame tag for values whose push frame is not known.
pub const NO_FRAME: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AbsValue {
    pub konst: Option<U256>,
    /// Instruction offsets that defined this value.
    pub defs: BTreeSet<usize>,
    pub taint: BTreeSet<Label>,
    /// Call depth at which the value was pushed.
    pub frame: u32,
    /// Pushed verbatim by a PUSH instruction (possibly moved by DUP/SWAP).
    pub pushed: bool,
    /// Derived through a comparison opcode.
    pub compared: bool,
    /// Comparison of a value against a function of itself, as in ABI
    /// cleanup checks; never a guard.
    pub tautology: bool,
    pub mapping_base: Option<U256>,
    /// Holds the 4-byte function selector of the incoming call.
    pub selector: bool,
    /// Raw first calldata word, before the selector shift.
    pub calldata_head: bool,
    /// Result of comparing the selector against this constant.
    pub selector_eq: Option<u32>,
}

impl AbsValue {
    pub fn top() -> Self {
        AbsValue {
            frame: NO_FRAME,
            ..Default::default()
        }
    }

    pub fn constant(v: U256) -> Self {
        AbsValue {
            konst: Some(v),
            frame: NO_FRAME,
            ..Default::default()
        }
    }

    pub fn konst_usize(&self) -> Option<usize> {
        self.konst.and_then(|k| usize::try_from(k).ok())
    }

    pub fn is_zero(&self) -> bool {
        self.konst == Some(U256::ZERO)
    }

    /// Least upper bound.
    pub fn join(&self, other: &AbsValue) -> AbsValue {
        AbsValue {
            konst: if self.konst == other.konst {
                self.konst
            } else {
                None
            },
            defs: self.defs.union(&other.defs).copied().collect(),
            taint: self.taint.union(&other.taint).cloned().collect(),
            frame: if self.frame == other.frame {
                self.frame
            } else {
                NO_FRAME
            },
            pushed: self.pushed && other.pushed,
            compared: self.compared || other.compared,
            tautology: self.tautology && other.tautology,
            mapping_base: if self.mapping_base == other.mapping_base {
                self.mapping_base
            } else {
                None
            },
            selector: self.selector && other.selector,
            calldata_head: self.calldata_head && other.calldata_head,
            selector_eq: if self.selector_eq == other.selector_eq {
                self.selector_eq
            } else {
                None
            },
        }
    }

    /// True when `other` carries no information beyond `self`.
    pub fn subsumes(&self, other: &AbsValue) -> bool {
        self.join(other) == *self
    }
}
