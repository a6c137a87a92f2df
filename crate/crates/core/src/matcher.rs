//! Reuse identification by opcode-type and opcode-count similarity.

use crate::db::SubcontractRecord;
use crate::flow::{reachable_regions, CallGraphEdge};
use crate::signature::{FeatureSymbol, MethodSignature};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_THETA1: f64 = 0.82;
pub const DEFAULT_THETA2: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
    /// Use `|F_s| / |F_c|` instead of the symmetric ratio.
    pub pn_verbatim: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            theta1: DEFAULT_THETA1,
            theta2: DEFAULT_THETA2,
            pn_verbatim: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("contract signature is empty")]
pub struct EmptyContractSignature;

pub fn one_hot(sig: &[FeatureSymbol]) -> [u8; 18] {
    let mut v = [0u8; 18];
    for s in sig {
        v[s.index()] = 1;
    }
    v
}

/// Cosine of the one-hot vectors; 0 when either side is empty.
pub fn opcode_type_similarity(c: &[FeatureSymbol], s: &[FeatureSymbol]) -> f64 {
    let (a, b) = (one_hot(c), one_hot(s));
    let dot: u32 = a.iter().zip(&b).map(|(x, y)| (*x & *y) as u32).sum();
    let na: u32 = a.iter().map(|&x| x as u32).sum();
    let nb: u32 = b.iter().map(|&x| x as u32).sum();
    if na == 0 || nb == 0 {
        tracing::debug!("empty signature in type similarity");
        return 0.0;
    }
    dot as f64 / ((na * nb) as f64).sqrt()
}

/// `min(|c|,|s|) / max(|c|,|s|)`.
pub fn opcode_length_similarity(
    c: &[FeatureSymbol],
    s: &[FeatureSymbol],
) -> Result<f64, EmptyContractSignature> {
    if c.is_empty() {
        return Err(EmptyContractSignature);
    }
    let (a, b) = (c.len() as f64, s.len() as f64);
    Ok(a.min(b) / a.max(b))
}

/// `|s| / |c|`; may exceed 1.
pub fn opcode_length_similarity_verbatim(
    c: &[FeatureSymbol],
    s: &[FeatureSymbol],
) -> Result<f64, EmptyContractSignature> {
    if c.is_empty() {
        return Err(EmptyContractSignature);
    }
    Ok(s.len() as f64 / c.len() as f64)
}

/// The sequences compared for a pair: chains when both sides call into
/// other methods, intra otherwise.
pub fn comparison_pair<'a>(
    c: &'a MethodSignature,
    s: &'a MethodSignature,
) -> (&'a [FeatureSymbol], &'a [FeatureSymbol]) {
    let has_chain = |m: &MethodSignature| m.chain.len() > m.intra.len();
    if has_chain(c) && has_chain(s) {
        (&c.chain, &s.chain)
    } else {
        (&c.intra, &s.intra)
    }
}

/// `(p_t, p_n)` for a pair, `None` when the contract side is empty.
pub fn score(c: &MethodSignature, s: &MethodSignature, t: &Thresholds) -> Option<(f64, f64)> {
    let (fc, fs) = comparison_pair(c, s);
    let pn = if t.pn_verbatim {
        opcode_length_similarity_verbatim(fc, fs)
    } else {
        opcode_length_similarity(fc, fs)
    }
    .ok()?;
    Some((opcode_type_similarity(fc, fs), pn))
}

pub fn passes(scores: (f64, f64), t: &Thresholds) -> bool {
    scores.0 >= t.theta1 && scores.1 >= t.theta2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseMatch {
    pub region: usize,
    /// Index into the record list.
    #[serde(skip)]
    pub record: usize,
    pub subcontract: String,
    pub version: String,
    pub method: String,
    pub p_t: f64,
    pub p_n: f64,
    pub best: bool,
}

impl ReuseMatch {
    /// `region subcontract version method p_t p_n best`.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}",
            self.region, self.subcontract, self.version, self.method, self.p_t, self.p_n, self.best
        )
    }
}

/// Every (region, record) pair passing both thresholds. Per region the
/// highest p_t, then p_n, then smallest record key is flagged `best` and
/// listed first.
pub fn match_signatures(
    sigs: &[MethodSignature],
    records: &[SubcontractRecord],
    t: &Thresholds,
) -> Vec<ReuseMatch> {
    let db_sigs: Vec<MethodSignature> = records.iter().map(|r| r.signature()).collect();
    let per_region: Vec<Vec<ReuseMatch>> = sigs
        .par_iter()
        .map(|c| {
            let mut ms: Vec<ReuseMatch> = db_sigs
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    let sc = score(c, s, t)?;
                    passes(sc, t).then(|| ReuseMatch {
                        region: c.region_id,
                        record: i,
                        subcontract: records[i].subcontract.clone(),
                        version: records[i].version.clone(),
                        method: records[i].method.clone(),
                        p_t: sc.0,
                        p_n: sc.1,
                        best: false,
                    })
                })
                .collect();
            ms.sort_by(|a, b| {
                b.p_t
                    .total_cmp(&a.p_t)
                    .then(b.p_n.total_cmp(&a.p_n))
                    .then_with(|| records[a.record].key().cmp(&records[b.record].key()))
            });
            if let Some(m) = ms.first_mut() {
                m.best = true;
            }
            ms
        })
        .collect();
    let mut out: Vec<ReuseMatch> = per_region.into_iter().flatten().collect();
    out.sort_by_key(|m| m.region);
    out
}

/// Drops every match of a region that reaches (through internal calls) a
/// region whose best match scores at least as high on both measures: the
/// caller's chain only resembles the record because it embeds the callee.
pub fn drop_wrapper_matches(matches: Vec<ReuseMatch>, edges: &[CallGraphEdge]) -> Vec<ReuseMatch> {
    let best: std::collections::BTreeMap<usize, (f64, f64)> = matches
        .iter()
        .filter(|m| m.best)
        .map(|m| (m.region, (m.p_t, m.p_n)))
        .collect();
    let wrappers: std::collections::BTreeSet<usize> = best
        .iter()
        .filter(|(&r, &(pt, pn))| {
            reachable_regions(edges, r)
                .iter()
                .filter(|&&q| q != r)
                .filter_map(|q| best.get(q))
                .any(|&(qt, qn)| qt >= pt && qn >= pn)
        })
        .map(|(&r, _)| r)
        .collect();
    matches
        .into_iter()
        .filter(|m| !wrappers.contains(&m.region))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::Visibility;
    use FeatureSymbol as F;

    fn sig(intra: &[F]) -> MethodSignature {
        MethodSignature {
            region_id: 0,
            intra: intra.to_vec(),
            chain: intra.to_vec(),
        }
    }

    fn rec(name: &str, intra: &[F]) -> SubcontractRecord {
        SubcontractRecord {
            subcontract: name.into(),
            version: "1".into(),
            method: "m".into(),
            selector: None,
            visibility: Visibility::Internal,
            intra: intra.to_vec(),
            chain: intra.to_vec(),
        }
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(
            opcode_type_similarity(&[F::R, F::W], &[F::W, F::R, F::R]),
            1.0
        );
        assert_eq!(opcode_type_similarity(&[F::R], &[F::W]), 0.0);
        let v = opcode_type_similarity(&[F::R, F::W, F::I], &[F::R, F::W, F::Re]);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(opcode_type_similarity(&[], &[F::W]), 0.0);
    }

    #[test]
    fn length_cases() {
        let a = vec![F::R; 30];
        let b = vec![F::R; 40];
        assert_eq!(opcode_length_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(opcode_length_similarity(&b, &a).unwrap(), 0.75);
        assert_eq!(opcode_length_similarity(&a, &b).unwrap(), 0.75);
        assert!((opcode_length_similarity_verbatim(&a, &b).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            opcode_length_similarity(&[], &a),
            Err(EmptyContractSignature)
        );
    }

    #[test]
    fn self_match_is_perfect() {
        let s = [F::R, F::W, F::I, F::C0];
        let m = match_signatures(&[sig(&s)], &[rec("A", &s)], &Thresholds::default());
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].p_t, m[0].p_n, m[0].best), (1.0, 1.0, true));
    }

    #[test]
    fn strict_threshold_rejects_perturbation() {
        let s = [F::R, F::W, F::I, F::C0];
        let t = Thresholds {
            theta1: 1.0,
            ..Thresholds::default()
        };
        assert!(match_signatures(&[sig(&s[..3])], &[rec("A", &s)], &t).is_empty());
    }

    #[test]
    fn ties_break_on_key() {
        let s = [F::R, F::W];
        let m = match_signatures(
            &[sig(&s)],
            &[rec("B", &s), rec("A", &s)],
            &Thresholds::default(),
        );
        assert_eq!(m.len(), 2);
        assert!(m[0].best);
        assert_eq!(m[0].subcontract, "A");
        assert!(!m[1].best);
    }

    fn scored(region: usize, record: usize, p: f64) -> ReuseMatch {
        ReuseMatch {
            region,
            record,
            subcontract: String::new(),
            version: String::new(),
            method: String::new(),
            p_t: p,
            p_n: p,
            best: true,
        }
    }

    #[test]
    fn wrapper_defers_to_stronger_callee() {
        use crate::flow::{CallKind, Callee};
        let edges = [CallGraphEdge {
            caller: 0,
            callee: Callee::Region(1),
            kind: CallKind::InternalJump,
            site: 0,
        }];
        let kept = drop_wrapper_matches(vec![scored(0, 0, 0.9), scored(1, 0, 1.0)], &edges);
        assert_eq!(kept.iter().map(|m| m.region).collect::<Vec<_>>(), [1]);
        let kept = drop_wrapper_matches(vec![scored(0, 0, 0.9), scored(1, 1, 0.85)], &edges);
        assert_eq!(kept.len(), 2);
        // Callees never defer to callers.
        let kept = drop_wrapper_matches(vec![scored(0, 0, 1.0), scored(1, 1, 0.9)], &edges);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn chains_used_only_when_both_have_callees() {
        let leaf = sig(&[F::R]);
        let caller = MethodSignature {
            region_id: 1,
            intra: vec![F::R],
            chain: vec![F::R, F::W],
        };
        let (a, b) = comparison_pair(&caller, &leaf);
        assert_eq!((a.len(), b.len()), (1, 1));
        let (a, b) = comparison_pair(&caller, &caller);
        assert_eq!((a.len(), b.len()), (2, 2));
    }
}
