//! Bytecode analysis for subcontract misuse: decoding, flow facts, method
//! boundaries, behavior signatures, reuse matching and detection.

pub mod asm;
pub mod boundary;
pub mod bytecode;
pub mod db;
pub mod detector;
pub mod flow;
pub mod matcher;
pub mod pipeline;
pub mod report;
pub mod signature;
