//! Byte-level tokenizer: one token per code byte, shifted past the reserved
//! tokens.

use crate::bytecode::InstructionStream;
use std::ops::Range;
use thiserror::Error;

pub const PAD: u16 = 0;
pub const TOKEN_S: u16 = 1;
pub const TOKEN_E: u16 = 2;
pub const TOKEN_N: u16 = 3;
pub const MASK: u16 = 4;
pub const RESERVED: u16 = 5;
pub const VOCAB_SIZE: usize = 256 + RESERVED as usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizeError {
    #[error(
        "window {start}..{end} outside code of length {code_len} or longer than {max_seq_len}"
    )]
    WindowOutOfRange {
        start: usize,
        end: usize,
        code_len: usize,
        max_seq_len: usize,
    },
}

pub fn byte_token(b: u8) -> u16 {
    b as u16 + RESERVED
}

/// Tokens for `window` of the executable bytes, right-padded to `max_seq_len`.
pub fn tokenize(
    stream: &InstructionStream,
    window: Range<usize>,
    max_seq_len: usize,
) -> Result<Vec<u16>, TokenizeError> {
    tokenize_bytes(&stream.code_bytes(), window, max_seq_len)
}

pub fn tokenize_bytes(
    code: &[u8],
    window: Range<usize>,
    max_seq_len: usize,
) -> Result<Vec<u16>, TokenizeError> {
    if window.start > window.end || window.end > code.len() || window.len() > max_seq_len {
        return Err(TokenizeError::WindowOutOfRange {
            start: window.start,
            end: window.end,
            code_len: code.len(),
            max_seq_len,
        });
    }
    let mut out: Vec<u16> = code[window].iter().map(|&b| byte_token(b)).collect();
    out.resize(max_seq_len, PAD);
    Ok(out)
}
