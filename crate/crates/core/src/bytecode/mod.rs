//! Bytecode decoding: hex/binary input, instruction stream, metadata trailer.

mod opcode;

pub use opcode::Opcode;

use ruint::aliases::U256;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("empty input")]
    EmptyInput,
    #[error("malformed hex: {0}")]
    MalformedHex(String),
}

/// One decoded instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub offset: usize,
    pub opcode: Opcode,
    /// Immediate bytes actually present in the input (may be shorter than
    /// the opcode's immediate length when truncated).
    pub immediate: Vec<u8>,
    /// The push immediate ran past the end of the code and was zero-padded.
    pub truncated: bool,
}

impl Instruction {
    /// Nominal size in bytes: opcode plus full immediate length.
    pub fn size(&self) -> usize {
        1 + self.opcode.immediate_len()
    }

    /// Bytes this instruction occupies in the input.
    pub fn encoded_len(&self) -> usize {
        1 + self.immediate.len()
    }

    /// Next instruction offset.
    pub fn next_offset(&self) -> usize {
        self.offset + self.encoded_len()
    }

    /// Push value with truncated immediates padded on the right with zeros.
    pub fn push_value(&self) -> Option<U256> {
        if !self.opcode.is_push() {
            return None;
        }
        let n = self.opcode.immediate_len();
        let mut buf = [0u8; 32];
        buf[32 - n..32 - n + self.immediate.len()].copy_from_slice(&self.immediate);
        Some(U256::from_be_bytes(buf))
    }
}

/// Decoded contract: executable instructions plus the stripped trailer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InstructionStream {
    pub code: Vec<Instruction>,
    pub code_len: usize,
    pub trailer: Vec<u8>,
}

impl InstructionStream {
    /// Index of the instruction starting at `offset`.
    pub fn index_of(&self, offset: usize) -> Option<usize> {
        self.code.binary_search_by_key(&offset, |i| i.offset).ok()
    }

    /// Index of the instruction covering `offset` (start or immediate byte).
    pub fn index_covering(&self, offset: usize) -> Option<usize> {
        if offset >= self.code_len {
            return None;
        }
        match self.code.binary_search_by_key(&offset, |i| i.offset) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    pub fn at(&self, offset: usize) -> Option<&Instruction> {
        self.index_of(offset).map(|i| &self.code[i])
    }

    pub fn is_jumpdest(&self, offset: usize) -> bool {
        self.at(offset)
            .is_some_and(|i| i.opcode == Opcode::JUMPDEST)
    }

    /// Executable bytes re-serialized from the instructions.
    pub fn code_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.code_len);
        for ins in &self.code {
            out.push(ins.opcode.0);
            out.extend_from_slice(&ins.immediate);
        }
        out
    }

    /// `code ‖ trailer`.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = self.code_bytes();
        out.extend_from_slice(&self.trailer);
        out
    }
}

/// Decode raw bytes into an instruction stream.
pub fn decode(bytes: &[u8]) -> Result<InstructionStream, DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::EmptyInput);
    }
    Ok(decode_unchecked(bytes))
}

fn decode_unchecked(bytes: &[u8]) -> InstructionStream {
    let mut code = Vec::new();
    let mut pc = 0;
    while pc < bytes.len() {
        let opcode = Opcode(bytes[pc]);
        let n = opcode.immediate_len();
        let end = (pc + 1 + n).min(bytes.len());
        let immediate = bytes[pc + 1..end].to_vec();
        let truncated = immediate.len() < n;
        code.push(Instruction {
            offset: pc,
            opcode,
            immediate,
            truncated,
        });
        pc = end;
    }
    InstructionStream {
        code,
        code_len: bytes.len(),
        trailer: Vec::new(),
    }
}

/// Move a compiler metadata trailer into `trailer`.
///
/// The last two bytes give the big-endian length of the CBOR blob that
/// precedes them. The blob must start with a CBOR map header, otherwise the
/// stream is returned unchanged.
pub fn strip_trailer(stream: InstructionStream) -> InstructionStream {
    let mut bytes = stream.code_bytes();
    let mut trailer = stream.trailer;
    let Some(cut) = trailer_start(&bytes) else {
        return InstructionStream {
            trailer,
            ..decode_unchecked_or_empty(bytes)
        };
    };
    let mut t = bytes.split_off(cut);
    t.extend_from_slice(&trailer);
    trailer = t;
    InstructionStream {
        trailer,
        ..decode_unchecked_or_empty(bytes)
    }
}

fn decode_unchecked_or_empty(bytes: Vec<u8>) -> InstructionStream {
    if bytes.is_empty() {
        InstructionStream::default()
    } else {
        decode_unchecked(&bytes)
    }
}

fn trailer_start(bytes: &[u8]) -> Option<usize> {
    let n = bytes.len();
    if n < 2 {
        return None;
    }
    let declared = u16::from_be_bytes([bytes[n - 2], bytes[n - 1]]) as usize;
    if declared == 0 || declared + 2 > n {
        return None;
    }
    let start = n - 2 - declared;
    if !(0xa0..=0xbf).contains(&bytes[start]) {
        return None;
    }
    Some(start)
}

/// Decode ASCII hex with optional `0x` prefix and arbitrary whitespace.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, DecodeError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let body = cleaned
        .strip_prefix("0x")
        .or_else(|| cleaned.strip_prefix("0X"))
        .unwrap_or(&cleaned);
    if !body.len().is_multiple_of(2) {
        return Err(DecodeError::MalformedHex("odd number of digits".into()));
    }
    let bytes = hex::decode(body).map_err(|e| DecodeError::MalformedHex(e.to_string()))?;
    if bytes.is_empty() {
        return Err(DecodeError::EmptyInput);
    }
    Ok(bytes)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode { path: String, source: DecodeError },
}

/// Read a `.hex` or `.bin` file. Anything not ending in `.bin` is treated
/// as hex text.
pub fn load_file(path: &Path) -> Result<InstructionStream, LoadError> {
    let raw = std::fs::read(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let is_bin = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("bin"));
    let bytes = if is_bin {
        raw
    } else {
        parse_hex(&String::from_utf8_lossy(&raw)).map_err(|source| LoadError::Decode {
            path: path.display().to_string(),
            source,
        })?
    };
    decode(&bytes).map_err(|source| LoadError::Decode {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_instruction_stream() {
        let s = decode(&parse_hex("0x6001600101").unwrap()).unwrap();
        let got: Vec<_> = s.code.iter().map(|i| (i.opcode, i.offset)).collect();
        assert_eq!(
            got,
            vec![(Opcode::PUSH1, 0), (Opcode::PUSH1, 2), (Opcode::ADD, 4)]
        );
        assert_eq!(s.code[0].push_value(), Some(U256::from(1)));
    }

    #[test]
    fn single_stop() {
        let s = decode(&[0x00]).unwrap();
        assert_eq!(s.code.len(), 1);
        assert_eq!(s.code[0].opcode, Opcode::STOP);
    }

    #[test]
    fn errors() {
        assert_eq!(decode(&[]), Err(DecodeError::EmptyInput));
        assert_eq!(parse_hex("0x"), Err(DecodeError::EmptyInput));
        assert!(matches!(
            parse_hex("0x123"),
            Err(DecodeError::MalformedHex(_))
        ));
        assert!(matches!(parse_hex("zz"), Err(DecodeError::MalformedHex(_))));
    }

    #[test]
    fn whitespace_and_prefix() {
        assert_eq!(
            parse_hex(" 0x60 01\n60\t0101 ").unwrap(),
            vec![0x60, 1, 0x60, 1, 1]
        );
    }

    #[test]
    fn truncated_push_is_padded() {
        let s = decode(&[0x61, 0xab]).unwrap();
        assert!(s.code[0].truncated);
        assert_eq!(s.code[0].push_value(), Some(U256::from(0xab00)));
        assert_eq!(s.serialize(), vec![0x61, 0xab]);
    }

    #[test]
    fn unknown_opcode_is_one_byte() {
        let s = decode(&[0x0c, 0x00]).unwrap();
        assert_eq!(s.code.len(), 2);
        assert!(!s.code[0].opcode.is_defined());
    }

    #[test]
    fn no_trailer_is_identity() {
        let s = decode(&[0x60, 0x01, 0x00]).unwrap();
        let t = strip_trailer(s.clone());
        assert_eq!(t, s);
        assert!(t.trailer.is_empty());
    }

    #[test]
    fn trailer_of_declared_length() {
        let mut bytes = vec![0x60, 0x01, 0x56, 0x00];
        let mut blob = vec![0xa2];
        blob.resize(0x33, 0x11);
        bytes.extend_from_slice(&blob);
        bytes.extend_from_slice(&[0x00, 0x33]);
        let s = decode(&bytes).unwrap();
        let t = strip_trailer(s);
        assert_eq!(t.code_len, bytes.len() - (0x33 + 2));
        assert_eq!(t.code_len, 4);
        assert_eq!(t.trailer.len(), 0x35);
        assert_eq!(t.serialize(), bytes);
    }

    #[test]
    fn index_covering_immediates() {
        let s = decode(&[0x61, 1, 2, 0x00]).unwrap();
        assert_eq!(s.index_covering(2), Some(0));
        assert_eq!(s.index_covering(3), Some(1));
        assert_eq!(s.index_covering(4), None);
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..512)) {
            let s = decode(&bytes).unwrap();
            prop_assert_eq!(s.serialize(), bytes.clone());
            let covered: usize = s.code.iter().map(|i| i.encoded_len()).sum();
            prop_assert_eq!(covered, s.code_len);
            let stripped = strip_trailer(s);
            prop_assert_eq!(stripped.serialize(), bytes);
        }

        #[test]
        fn offsets_are_contiguous(bytes in proptest::collection::vec(any::<u8>(), 1..256)) {
            let s = decode(&bytes).unwrap();
            for w in s.code.windows(2) {
                prop_assert_eq!(w[1].offset, w[0].offset + 1 + w[0].immediate.len());
            }
        }
    }
}
