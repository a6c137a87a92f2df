//! Storage slot accesses.

use super::cfg::ControlFlowGraph;
use super::explore::AccessKind;
use super::value::Slot;
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StorageAccess {
    pub slot: Slot,
    pub kind: AccessKind,
    /// Offset of the SLOAD / SSTORE.
    pub site: usize,
    /// Method entries on the call string whenever the access executed.
    pub owners: BTreeSet<usize>,
}

/// Every reached SLOAD and SSTORE with its slot descriptor, ordered by site.
pub fn storage_accesses(cfg: &ControlFlowGraph) -> Vec<StorageAccess> {
    let mut out: Vec<StorageAccess> = cfg
        .facts
        .storage
        .iter()
        .map(|((site, kind, slot), owners)| StorageAccess {
            slot: slot.clone(),
            kind: *kind,
            site: *site,
            owners: owners.clone(),
        })
        .collect();
    out.sort_by(|a, b| (a.site, a.kind, &a.slot).cmp(&(b.site, b.kind, &b.slot)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::decode;
    use crate::flow::build_cfg;
    use ruint::aliases::U256;

    fn accesses(code: &[u8]) -> Vec<StorageAccess> {
        storage_accesses(&build_cfg(decode(code).unwrap()))
    }

    #[test]
    fn constant_slot_read() {
        let a = accesses(&[0x60, 0x00, 0x54, 0x00]);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].slot, Slot::Constant(U256::ZERO));
        assert_eq!(a[0].kind, AccessKind::Read);
        assert_eq!(a[0].site, 2);
    }

    #[test]
    fn calldata_slot_is_opaque() {
        let a = accesses(&[0x5f, 0x35, 0x54, 0x00]);
        assert_eq!(a[0].slot, Slot::Opaque);
    }

    #[test]
    fn canonical_mapping_write() {
        // key = CALLER; mstore(0, key); mstore(0x20, 2); sstore(keccak(0, 0x40), 1)
        let code = [
            0x33, 0x5f, 0x52, // CALLER PUSH0 MSTORE
            0x60, 0x02, 0x60, 0x20, 0x52, // PUSH1 2 PUSH1 0x20 MSTORE
            0x60, 0x01, // PUSH1 1 (value)
            0x60, 0x40, 0x5f, 0x20, // PUSH1 0x40 PUSH0 KECCAK256
            0x55, 0x00, // SSTORE STOP
        ];
        let a = accesses(&code);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].slot, Slot::Hashed(U256::from(2)));
        assert_eq!(a[0].kind, AccessKind::Write);
    }

    #[test]
    fn nested_mapping_is_opaque() {
        // inner = keccak(key ‖ 2); mstore(0, key2); mstore(0x20, inner); sstore(keccak(0,0x40), 1)
        let code = [
            0x33, 0x5f, 0x52, 0x60, 0x02, 0x60, 0x20, 0x52, 0x60, 0x40, 0x5f, 0x20, // inner
            0x60, 0x20, 0x52, // mstore(0x20, inner)
            0x32, 0x5f, 0x52, // mstore(0, ORIGIN)
            0x60, 0x01, 0x60, 0x40, 0x5f, 0x20, 0x55, 0x00,
        ];
        let a = accesses(&code);
        assert_eq!(a[0].slot, Slot::Opaque);
    }
}
