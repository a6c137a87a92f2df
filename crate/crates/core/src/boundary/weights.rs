//! SMVW weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SMVW"  u16 version
//! u32 line_count, then per line: u32 len, UTF-8 `key=value`
//! u32 tensor_count, then per tensor:
//!     u32 name_len, name, u32 rank, rank × u32 dims, f32 data (row-major)
//! u64 FNV-1a of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SMVW";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("truncated file")]
    Truncated,
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("malformed header line {0:?}")]
    Header(String),
    #[error("missing header key {0}")]
    MissingKey(&'static str),
    #[error("tensor {name}: shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("missing tensor {0}")]
    MissingTensor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub layer_count: usize,
    pub head_count: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
}

impl ModelConfig {
    /// Desk-scale encoder.
    pub const DESK: ModelConfig = ModelConfig {
        vocab_size: super::tokenizer::VOCAB_SIZE,
        hidden_dim: 64,
        layer_count: 2,
        head_count: 4,
        ffn_dim: 256,
        max_seq_len: 512,
    };

    fn to_header(self) -> BTreeMap<String, String> {
        [
            ("vocab_size", self.vocab_size),
            ("hidden_dim", self.hidden_dim),
            ("layer_count", self.layer_count),
            ("head_count", self.head_count),
            ("ffn_dim", self.ffn_dim),
            ("max_seq_len", self.max_seq_len),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    fn from_header(h: &BTreeMap<String, String>) -> Result<Self, WeightsError> {
        let get = |k: &'static str| -> Result<usize, WeightsError> {
            h.get(k)
                .ok_or(WeightsError::MissingKey(k))?
                .parse()
                .map_err(|_| WeightsError::Header(format!("{k}={}", h[k])))
        };
        Ok(ModelConfig {
            vocab_size: get("vocab_size")?,
            hidden_dim: get("hidden_dim")?,
            layer_count: get("layer_count")?,
            head_count: get("head_count")?,
            ffn_dim: get("ffn_dim")?,
            max_seq_len: get("max_seq_len")?,
        })
    }

    /// Every tensor the encoder needs, with its shape.
    pub fn expected_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (h, f) = (self.hidden_dim, self.ffn_dim);
        let mut out = vec![
            ("embed.tokens".to_string(), vec![self.vocab_size, h]),
            ("embed.positions".to_string(), vec![self.max_seq_len, h]),
            ("embed.ln.weight".to_string(), vec![h]),
            ("embed.ln.bias".to_string(), vec![h]),
        ];
        for i in 0..self.layer_count {
            for m in ["q", "k", "v", "o"] {
                out.push((format!("layers.{i}.attn.{m}.weight"), vec![h, h]));
                out.push((format!("layers.{i}.attn.{m}.bias"), vec![h]));
            }
            out.push((format!("layers.{i}.attn_ln.weight"), vec![h]));
            out.push((format!("layers.{i}.attn_ln.bias"), vec![h]));
            out.push((format!("layers.{i}.ffn.up.weight"), vec![h, f]));
            out.push((format!("layers.{i}.ffn.up.bias"), vec![f]));
            out.push((format!("layers.{i}.ffn.down.weight"), vec![f, h]));
            out.push((format!("layers.{i}.ffn.down.bias"), vec![h]));
            out.push((format!("layers.{i}.ffn_ln.weight"), vec![h]));
            out.push((format!("layers.{i}.ffn_ln.bias"), vec![h]));
        }
        out.push(("head.weight".to_string(), vec![h, 3]));
        out.push(("head.bias".to_string(), vec![3]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub header: BTreeMap<String, String>,
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).ok_or(WeightsError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(WeightsError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<usize, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

impl ModelWeights {
    /// Zero-initialised weights with the expected shapes for `config`.
    pub fn zeros(config: ModelConfig) -> Self {
        let tensors = config
            .expected_shapes()
            .into_iter()
            .map(|(name, dims)| {
                let n = dims.iter().product();
                (
                    name,
                    Tensor {
                        dims,
                        data: vec![0.0; n],
                    },
                )
            })
            .collect();
        ModelWeights {
            header: config.to_header(),
            config,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, WeightsError> {
        self.tensors
            .get(name)
            .ok_or_else(|| WeightsError::MissingTensor(name.to_string()))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Check every expected tensor is present with the declared shape.
    pub fn validate(&self) -> Result<(), WeightsError> {
        for (name, expected) in self.config.expected_shapes() {
            let t = self.tensor(&name)?;
            if t.dims != expected || t.data.len() != expected.iter().product::<usize>() {
                return Err(WeightsError::ShapeMismatch {
                    name,
                    expected,
                    got: t.dims.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, WeightsError> {
        if buf.len() < 8 {
            return Err(WeightsError::Truncated);
        }
        let (body, sum) = buf.split_at(buf.len() - 8);
        let stored = u64::from_le_bytes(sum.try_into().expect("8 bytes"));
        let computed = fnv1a64(body);
        if stored != computed {
            return Err(WeightsError::Checksum { stored, computed });
        }
        let mut c = Cursor { buf: body, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(WeightsError::BadMagic);
        }
        let version = c.u16()?;
        if version != VERSION {
            return Err(WeightsError::Version(version));
        }
        let mut header = BTreeMap::new();
        for _ in 0..c.u32()? {
            let n = c.u32()?;
            let line = std::str::from_utf8(c.take(n)?)
                .map_err(|_| WeightsError::Header("<non-utf8>".into()))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WeightsError::Header(line.to_string()))?;
            header.insert(k.to_string(), v.to_string());
        }
        let config = ModelConfig::from_header(&header)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..c.u32()? {
            let n = c.u32()?;
            let name = String::from_utf8(c.take(n)?.to_vec())
                .map_err(|_| WeightsError::Header("<non-utf8 tensor name>".into()))?;
            let rank = c.u32()?;
            let dims = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
            let count: usize = dims.iter().product();
            let raw = c.take(count.checked_mul(4).ok_or(WeightsError::Truncated)?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(name, Tensor { dims, data });
        }
        if c.pos != body.len() {
            return Err(WeightsError::Header(
                "trailing bytes before checksum".into(),
            ));
        }
        Ok(ModelWeights {
            header,
            config,
            tensors,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        for (k, v) in &self.header {
            let line = format!("{k}={v}");
            out.extend_from_slice(&(line.len() as u32).to_le_bytes());
            out.extend_from_slice(line.as_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for d in &t.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn load(path: &Path) -> Result<Self, WeightsError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<(), WeightsError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            vocab_size: 261,
            hidden_dim: 8,
            layer_count: 1,
            head_count: 2,
            ffn_dim: 16,
            max_seq_len: 16,
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn round_trip_header_and_tensors() {
        let mut w = ModelWeights::zeros(small());
        w.tensor_mut("head.bias").unwrap().data = vec![0.5, -1.0, 2.0];
        let back = ModelWeights::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.config, small());
        back.validate().unwrap();
    }

    #[test]
    fn file_size_is_header_plus_tensors_plus_checksum() {
        let w = ModelWeights::zeros(small());
        let header: usize = 4
            + 2
            + 4
            + w.header
                .iter()
                .map(|(k, v)| 4 + k.len() + 1 + v.len())
                .sum::<usize>()
            + 4;
        let tensors: usize = w
            .tensors
            .iter()
            .map(|(n, t)| 4 + n.len() + 4 + 4 * t.dims.len() + 4 * t.data.len())
            .sum();
        assert_eq!(w.to_bytes().len(), header + tensors + 8);
    }

    #[test]
    fn corrupt_byte_fails_checksum() {
        let w = ModelWeights::zeros(small());
        let mut b = w.to_bytes();
        let i = b.len() - 20;
        b[i] ^= 0x01;
        assert!(matches!(
            ModelWeights::from_bytes(&b),
            Err(WeightsError::Checksum { .. })
        ));
    }

    #[test]
    fn shape_mismatch_detected() {
        let mut w = ModelWeights::zeros(small());
        w.tensor_mut("head.weight").unwrap().dims = vec![3, 8];
        assert!(matches!(
            w.validate(),
            Err(WeightsError::ShapeMismatch { .. })
        ));
    }
}
