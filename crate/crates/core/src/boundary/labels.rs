use super::{
    normalize, well_nested, Boundary, BoundaryLabel, LabelSource, MethodRegion, RegionKind,
};
use crate::flow::ControlFlowGraph;

/// Pair S labels with the next E. An S with no E before the next S closes
/// there (or at the end of code); an E with no open S is dropped.
pub fn labels_to_regions(labels: &[BoundaryLabel], cfg: &ControlFlowGraph) -> Vec<MethodRegion> {
    let code_len = cfg.stream.code_len;
    let mut out = Vec::new();
    let mut open: Option<(usize, LabelSource)> = None;
    let mut push = |start: usize, end: usize, source: LabelSource| {
        if start < end {
            out.push(MethodRegion {
                id: 0,
                start,
                end,
                kind: RegionKind::InheritedRecovered,
                selector: None,
                source,
                owner: start,
            });
        }
    };
    for l in labels {
        match l.label {
            Boundary::S => {
                if let Some((s, src)) = open {
                    push(s, l.offset, src);
                }
                open = Some((l.offset, l.source));
            }
            Boundary::E => {
                if let Some((s, src)) = open.take() {
                    push(s, l.offset, src);
                }
            }
            Boundary::N => {}
        }
    }
    if let Some((s, src)) = open {
        push(s, code_len, src);
    }
    normalize(out)
}

/// Combine heuristic and model regions. Heuristic public regions are always
/// kept; with `keep_all_heuristic` every heuristic region is. A model region
/// is added only where it nests cleanly and does not sit inside a
/// non-public heuristic region.
pub fn merge_regions(
    heuristic: &[MethodRegion],
    model: &[MethodRegion],
    keep_all_heuristic: bool,
) -> Vec<MethodRegion> {
    let mut out: Vec<MethodRegion> = heuristic
        .iter()
        .filter(|r| keep_all_heuristic || r.kind == RegionKind::Public)
        .cloned()
        .collect();
    let base = out.clone();
    for m in model {
        let clash = base.iter().any(|h| {
            !well_nested(h, m)
                || (h.kind != RegionKind::Public && h.encloses(m))
                || (h.start == m.start && h.end == m.end)
        });
        let clash_model = out
            .iter()
            .filter(|r| r.source == LabelSource::Model)
            .any(|r| !well_nested(r, m));
        if !clash && !clash_model {
            out.push(m.clone());
        }
    }
    normalize(out)
}
