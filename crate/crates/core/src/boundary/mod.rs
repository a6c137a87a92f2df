//! Method boundary recovery.

mod heuristic;
mod labels;
pub mod model;
pub mod tokenizer;
pub mod weights;

pub use heuristic::recover_heuristic;
pub use labels::{labels_to_regions, merge_regions};
pub use model::{recover_model, ModelError};
pub use tokenizer::{tokenize, TokenizeError};
pub use weights::{ModelConfig, ModelWeights, WeightsError};

use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Public,
    Internal,
    InheritedRecovered,
}

impl RegionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Public => "public",
            RegionKind::Internal => "internal",
            RegionKind::InheritedRecovered => "inherited-recovered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Heuristic,
    Model,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Heuristic => "heuristic",
            LabelSource::Model => "model",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Boundary {
    S,
    E,
    N,
}

impl Boundary {
    pub const ALL: [Boundary; 3] = [Boundary::S, Boundary::E, Boundary::N];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryLabel {
    pub offset: usize,
    pub label: Boundary,
    pub confidence: f32,
    pub source: LabelSource,
}

impl BoundaryLabel {
    pub fn heuristic(offset: usize, label: Boundary) -> Self {
        BoundaryLabel {
            offset,
            label,
            confidence: 1.0,
            source: LabelSource::Heuristic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodRegion {
    pub id: usize,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub kind: RegionKind,
    pub selector: Option<u32>,
    pub source: LabelSource,
    /// Entry offset of the method whose frame executes this code. Equals
    /// `start` except for recovered fragments split from their method.
    pub owner: usize,
}

impl MethodRegion {
    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }

    pub fn encloses(&self, other: &MethodRegion) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// `start end kind source`.
    pub fn dump_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.start,
            self.end,
            self.kind.as_str(),
            self.source.as_str()
        )
    }
}

/// Two regions are disjoint or nested.
pub fn well_nested(a: &MethodRegion, b: &MethodRegion) -> bool {
    a.end <= b.start || b.end <= a.start || a.encloses(b) || b.encloses(a)
}

/// Sort, drop duplicates, cut partial overlaps, and renumber ids.
pub(crate) fn normalize(mut regions: Vec<MethodRegion>) -> Vec<MethodRegion> {
    regions.retain(|r| r.start < r.end);
    regions.sort_by(|a, b| {
        (a.start, std::cmp::Reverse(a.end), a.kind).cmp(&(
            b.start,
            std::cmp::Reverse(b.end),
            b.kind,
        ))
    });
    regions.dedup_by(|b, a| a.start == b.start && a.end == b.end);
    loop {
        let mut changed = false;
        for i in 0..regions.len() {
            for j in 0..regions.len() {
                let (a, b) = (&regions[i], &regions[j]);
                if a.start < b.start && b.start < a.end && a.end < b.end {
                    regions[i].end = regions[j].start;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    regions.retain(|r| r.start < r.end);
    regions.sort_by(|a, b| {
        (a.start, std::cmp::Reverse(a.end), a.kind).cmp(&(
            b.start,
            std::cmp::Reverse(b.end),
            b.kind,
        ))
    });
    regions.dedup_by(|b, a| a.start == b.start && a.end == b.end);
    for (i, r) in regions.iter_mut().enumerate() {
        r.id = i;
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(start: usize, end: usize) -> MethodRegion {
        MethodRegion {
            id: 0,
            start,
            end,
            kind: RegionKind::Internal,
            selector: None,
            source: LabelSource::Heuristic,
            owner: start,
        }
    }

    #[test]
    fn normalize_cuts_partial_overlap() {
        let out = normalize(vec![r(10, 30), r(20, 40), r(12, 15)]);
        let spans: Vec<_> = out.iter().map(|x| (x.start, x.end)).collect();
        assert_eq!(spans, vec![(10, 20), (12, 15), (20, 40)]);
        for a in &out {
            for b in &out {
                assert!(well_nested(a, b));
            }
        }
    }
}
