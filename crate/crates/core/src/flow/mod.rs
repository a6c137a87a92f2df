//! Control flow, data flow and storage analysis.

pub mod callgraph;
pub mod cfg;
pub mod explore;
pub mod memory;
pub mod storage;
pub mod value;

pub use callgraph::{
    call_chains, call_graph, internal_adjacency, reachable_regions, CallGraphEdge, CallKind,
    Callee, DEFAULT_MAX_DEPTH,
};
pub use cfg::{build_cfg, build_cfg_with, BasicBlock, BlockId, ControlFlowGraph};
pub use explore::{AccessKind, DfgEdge, EdgeKind, ExploreConfig, FlowFacts, PROLOGUE};
pub use storage::{storage_accesses, StorageAccess};
pub use value::{AbsValue, Label, Slot};
