//! Encoder inference over byte windows.
//!
//! Post-norm transformer encoder: learned token and position embeddings,
//! LayerNorm (eps 1e-5), multi-head self-attention with PAD keys masked,
//! GELU (tanh form) feed-forward, and a linear S/E/N head. Linear weights are
//! stored `[in, out]`.

use super::tokenizer::{tokenize_bytes, TokenizeError, PAD};
use super::weights::{ModelWeights, WeightsError};
use super::{Boundary, BoundaryLabel, LabelSource};
use crate::bytecode::InstructionStream;
use rayon::prelude::*;
use thiserror::Error;

const LN_EPS: f32 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("token {0} outside vocabulary")]
    Vocab(u16),
}

/// Row-major `[rows, cols]`.
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

fn linear(x: &Mat, w: &[f32], b: &[f32], out: usize) -> Mat {
    let mut data = vec![0.0; x.rows * out];
    for r in 0..x.rows {
        let dst = &mut data[r * out..(r + 1) * out];
        dst.copy_from_slice(b);
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wr = &w[i * out..(i + 1) * out];
            for (d, &wv) in dst.iter_mut().zip(wr) {
                *d += xi * wv;
            }
        }
    }
    Mat {
        rows: x.rows,
        cols: out,
        data,
    }
}

fn layer_norm(x: &mut Mat, g: &[f32], b: &[f32]) {
    let n = x.cols;
    for r in 0..x.rows {
        let row = &mut x.data[r * n..(r + 1) * n];
        let mean = row.iter().sum::<f32>() / n as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * g[i] + b[i];
        }
    }
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn add_into(x: &mut Mat, y: &Mat) {
    for (a, b) in x.data.iter_mut().zip(&y.data) {
        *a += b;
    }
}

fn softmax(v: &mut [f32]) {
    let m = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if m == f32::NEG_INFINITY {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

struct Encoder<'w> {
    w: &'w ModelWeights,
}

impl<'w> Encoder<'w> {
    fn t(&self, name: &str) -> &'w [f32] {
        // validated before construction
        &self.w.tensors[name].data
    }

    fn attention(&self, x: &Mat, layer: usize, keep: &[bool]) -> Mat {
        let c = &self.w.config;
        let h = c.hidden_dim;
        let p = |m: &str, k: &str| format!("layers.{layer}.attn.{m}.{k}");
        let q = linear(x, self.t(&p("q", "weight")), self.t(&p("q", "bias")), h);
        let k = linear(x, self.t(&p("k", "weight")), self.t(&p("k", "bias")), h);
        let v = linear(x, self.t(&p("v", "weight")), self.t(&p("v", "bias")), h);
        let heads = c.head_count.max(1);
        let dh = h / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let n = x.rows;
        let mut ctx = Mat {
            rows: n,
            cols: h,
            data: vec![0.0; n * h],
        };
        let mut scores = vec![0.0f32; n];
        for hd in 0..heads {
            let lo = hd * dh;
            for i in 0..n {
                let qi = &q.row(i)[lo..lo + dh];
                for j in 0..n {
                    scores[j] = if keep[j] {
                        let kj = &k.row(j)[lo..lo + dh];
                        qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale
                    } else {
                        f32::NEG_INFINITY
                    };
                }
                softmax(&mut scores);
                let dst = &mut ctx.data[i * h + lo..i * h + lo + dh];
                for (j, &w) in scores.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (d, &vv) in dst.iter_mut().zip(&v.row(j)[lo..lo + dh]) {
                        *d += w * vv;
                    }
                }
            }
        }
        linear(&ctx, self.t(&p("o", "weight")), self.t(&p("o", "bias")), h)
    }

    /// Per-position probabilities over S, E, N.
    fn forward(&self, tokens: &[u16]) -> Result<Vec<[f32; 3]>, ModelError> {
        let c = &self.w.config;
        let h = c.hidden_dim;
        let n = tokens.len();
        let emb = self.t("embed.tokens");
        let pos = self.t("embed.positions");
        let mut x = Mat {
            rows: n,
            cols: h,
            data: vec![0.0; n * h],
        };
        for (i, &tok) in tokens.iter().enumerate() {
            if tok as usize >= c.vocab_size {
                return Err(ModelError::Vocab(tok));
            }
            let t = tok as usize;
            for d in 0..h {
                x.data[i * h + d] = emb[t * h + d] + pos[i * h + d];
            }
        }
        layer_norm(&mut x, self.t("embed.ln.weight"), self.t("embed.ln.bias"));
        let keep: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();
        for l in 0..c.layer_count {
            let a = self.attention(&x, l, &keep);
            add_into(&mut x, &a);
            layer_norm(
                &mut x,
                self.t(&format!("layers.{l}.attn_ln.weight")),
                self.t(&format!("layers.{l}.attn_ln.bias")),
            );
            let mut up = linear(
                &x,
                self.t(&format!("layers.{l}.ffn.up.weight")),
                self.t(&format!("layers.{l}.ffn.up.bias")),
                c.ffn_dim,
            );
            up.data.iter_mut().for_each(|v| *v = gelu(*v));
            let down = linear(
                &up,
                self.t(&format!("layers.{l}.ffn.down.weight")),
                self.t(&format!("layers.{l}.ffn.down.bias")),
                h,
            );
            add_into(&mut x, &down);
            layer_norm(
                &mut x,
                self.t(&format!("layers.{l}.ffn_ln.weight")),
                self.t(&format!("layers.{l}.ffn_ln.bias")),
            );
        }
        let logits = linear(&x, self.t("head.weight"), self.t("head.bias"), 3);
        Ok((0..n)
            .map(|i| {
                let mut p = [
                    logits.data[i * 3],
                    logits.data[i * 3 + 1],
                    logits.data[i * 3 + 2],
                ];
                softmax(&mut p);
                p
            })
            .collect())
    }
}

/// Window starts covering `len` bytes with windows of `w` and stride `w/2`.
pub fn windows(len: usize, w: usize) -> Vec<std::ops::Range<usize>> {
    if len == 0 || w == 0 {
        return Vec::new();
    }
    let stride = (w / 2).max(1);
    let mut out = Vec::new();
    let mut s = 0;
    loop {
        let e = (s + w).min(len);
        out.push(s..e);
        if e == len {
            break;
        }
        s += stride;
    }
    out
}

/// Per-byte S/E/N probabilities; overlapping windows keep the more
/// confident prediction per byte.
pub fn byte_probabilities(
    code: &[u8],
    weights: &ModelWeights,
) -> Result<Vec<[f32; 3]>, ModelError> {
    weights.validate()?;
    let enc = Encoder { w: weights };
    let max = weights.config.max_seq_len;
    let per_window: Vec<(usize, Vec<[f32; 3]>)> = windows(code.len(), max)
        .into_par_iter()
        .map(|r| {
            let toks = tokenize_bytes(code, r.clone(), max)?;
            let mut probs = enc.forward(&toks)?;
            probs.truncate(r.len());
            Ok((r.start, probs))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut out: Vec<Option<[f32; 3]>> = vec![None; code.len()];
    for (start, probs) in per_window {
        for (i, p) in probs.into_iter().enumerate() {
            let best = |q: &[f32; 3]| q.iter().copied().fold(0.0, f32::max);
            let slot = &mut out[start + i];
            if slot.as_ref().is_none_or(|q| best(&p) > best(q)) {
                *slot = Some(p);
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|p| p.unwrap_or([0.0, 0.0, 1.0]))
        .collect())
}

/// One label per instruction. Byte predictions inside an immediate move to
/// the instruction that owns it; the most confident S or E wins, else N.
pub fn recover_model(
    stream: &InstructionStream,
    weights: &ModelWeights,
) -> Result<Vec<BoundaryLabel>, ModelError> {
    let code = stream.code_bytes();
    let probs = byte_probabilities(&code, weights)?;
    Ok(snap(stream, &probs))
}

pub(crate) fn snap(stream: &InstructionStream, probs: &[[f32; 3]]) -> Vec<BoundaryLabel> {
    let mut out = Vec::with_capacity(stream.code.len());
    for ins in &stream.code {
        let lo = ins.offset.min(probs.len());
        let hi = (ins.offset + ins.encoded_len()).min(probs.len());
        let mut pick: Option<(Boundary, f32)> = None;
        for p in &probs[lo..hi] {
            let arg = argmax(p);
            if arg != Boundary::N && pick.is_none_or(|(_, c)| p[arg.index()] > c) {
                pick = Some((arg, p[arg.index()]));
            }
        }
        let (label, confidence) = pick.unwrap_or((
            Boundary::N,
            probs.get(lo).map_or(1.0, |p| p[Boundary::N.index()]),
        ));
        out.push(BoundaryLabel {
            offset: ins.offset,
            label,
            confidence,
            source: LabelSource::Model,
        });
    }
    out
}

fn argmax(p: &[f32; 3]) -> Boundary {
    let mut best = Boundary::N;
    for b in Boundary::ALL {
        if p[b.index()] > p[best.index()] {
            best = b;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::ModelConfig;
    use crate::bytecode::decode;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 261,
            hidden_dim: 8,
            layer_count: 1,
            head_count: 2,
            ffn_dim: 16,
            max_seq_len: 8,
        }
    }

    #[test]
    fn window_cover() {
        assert_eq!(windows(0, 8), vec![]);
        assert_eq!(windows(5, 8), vec![0..5]);
        assert_eq!(windows(12, 8), vec![0..8, 4..12]);
        assert_eq!(windows(13, 8), vec![0..8, 4..12, 8..13]);
    }

    #[test]
    fn zero_weights_give_uniform() {
        let w = ModelWeights::zeros(tiny());
        let s = decode(&[0x60, 0x01, 0x00]).unwrap();
        let labels = recover_model(&s, &w).unwrap();
        assert_eq!(labels.len(), 2);
        assert!(labels.iter().all(|l| l.label == Boundary::N));
    }

    #[test]
    fn head_bias_drives_labels() {
        let mut w = ModelWeights::zeros(tiny());
        w.tensor_mut("head.bias").unwrap().data = vec![3.0, 0.0, 0.0];
        let bytes = vec![0x5bu8; 20];
        let s = decode(&bytes).unwrap();
        let labels = recover_model(&s, &w).unwrap();
        assert_eq!(labels.len(), 20);
        assert!(labels
            .iter()
            .all(|l| l.label == Boundary::S && l.confidence > 0.9));
    }

    #[test]
    fn immediate_prediction_snaps_to_owner() {
        let s = decode(&[0x61, 0xaa, 0xbb, 0x00]).unwrap();
        let n = [0.0, 0.0, 1.0];
        let probs = vec![n, [0.1, 0.8, 0.1], n, n];
        let labels = snap(&s, &probs);
        assert_eq!(labels[0].offset, 0);
        assert_eq!(labels[0].label, Boundary::E);
        assert_eq!(labels[1].label, Boundary::N);
    }

    #[test]
    fn bad_shape_rejected() {
        let mut w = ModelWeights::zeros(tiny());
        w.tensor_mut("embed.tokens").unwrap().dims = vec![8, 261];
        let s = decode(&[0x00]).unwrap();
        assert!(matches!(recover_model(&s, &w), Err(ModelError::Weights(_))));
    }
}
