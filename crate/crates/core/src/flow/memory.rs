//! Byte-range memory model for the abstract interpreter.
//!
//! Writes at constant offsets are tracked as ranges. Writes at unknown
//! offsets accumulate into a single `wild` value that is visible to every
//! read above the scratch area.

use super::value::AbsValue;

/// Reads below this offset (scratch space and the free-memory pointer) are
/// not affected by writes at unknown offsets.
pub const WILD_FLOOR: u64 = 0x80;

/// Ranges beyond this are treated as unknown.
const MAX_TRACKED: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Cell {
    start: u64,
    len: u64,
    value: AbsValue,
}

impl Cell {
    fn end(&self) -> u64 {
        self.start + self.len
    }

    fn overlaps(&self, start: u64, len: u64) -> bool {
        self.start < start + len && start < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Memory {
    cells: Vec<Cell>,
    wild: Option<AbsValue>,
}

/// Result of a read: the combined value and the writers it depends on.
pub struct Read {
    pub value: AbsValue,
    /// The read matched exactly one full-width cell.
    pub exact: bool,
}

impl Memory {
    fn bounds(offset: &AbsValue, len: &AbsValue) -> Option<(u64, u64)> {
        let o = u64::try_from(offset.konst?).ok()?;
        let l = u64::try_from(len.konst?).ok()?;
        if o > MAX_TRACKED || l > MAX_TRACKED {
            return None;
        }
        Some((o, l))
    }

    /// Record a write of `value` over `[offset, offset+len)`.
    pub fn write(&mut self, offset: &AbsValue, len: &AbsValue, value: AbsValue) {
        match Self::bounds(offset, len) {
            Some((_, 0)) => {}
            Some((o, l)) => {
                self.cells.retain(|c| !(c.start >= o && c.end() <= o + l));
                self.cells.push(Cell {
                    start: o,
                    len: l,
                    value,
                });
                self.cells.sort_by_key(|c| (c.start, c.len));
            }
            None => {
                let mut v = value;
                v.konst = None;
                self.wild = Some(match self.wild.take() {
                    Some(w) => w.join(&v),
                    None => v,
                });
            }
        }
    }

    /// Read `[offset, offset+len)`. The caller supplies the fresh result
    /// value; this merges in everything the bytes may depend on.
    pub fn read(&self, offset: &AbsValue, len: &AbsValue) -> Read {
        let mut value = AbsValue::top();
        let mut exact = false;
        match Self::bounds(offset, len) {
            Some((_, 0)) => {}
            Some((o, l)) => {
                let hits: Vec<&Cell> = self.cells.iter().filter(|c| c.overlaps(o, l)).collect();
                for c in &hits {
                    value = merge(value, &c.value);
                }
                if hits.len() == 1 && hits[0].start == o && hits[0].len == l {
                    value.konst = hits[0].value.konst;
                    value.mapping_base = hits[0].value.mapping_base;
                    exact = true;
                } else {
                    value.konst = None;
                }
                if o + l > WILD_FLOOR {
                    if let Some(w) = &self.wild {
                        value = merge(value, w);
                        value.konst = None;
                        exact = false;
                    }
                }
            }
            None => {
                for c in &self.cells {
                    value = merge(value, &c.value);
                }
                if let Some(w) = &self.wild {
                    value = merge(value, w);
                }
                value.konst = None;
            }
        }
        Read { value, exact }
    }

    /// Constant word stored exactly at `offset`, if any.
    pub fn word_at(&self, offset: u64) -> Option<&AbsValue> {
        let mut hits = self.cells.iter().filter(|c| c.overlaps(offset, 32));
        let c = hits.next()?;
        if hits.next().is_some() || c.start != offset || c.len != 32 {
            return None;
        }
        if offset + 32 > WILD_FLOOR && self.wild.is_some() {
            return None;
        }
        Some(&c.value)
    }

    pub fn join(&self, other: &Memory) -> Memory {
        let mut cells = Vec::new();
        for c in &self.cells {
            match other
                .cells
                .iter()
                .find(|d| d.start == c.start && d.len == c.len)
            {
                Some(d) => cells.push(Cell {
                    start: c.start,
                    len: c.len,
                    value: c.value.join(&d.value),
                }),
                None => cells.push(Cell {
                    value: unknown_content(&c.value),
                    ..c.clone()
                }),
            }
        }
        for d in &other.cells {
            if !self
                .cells
                .iter()
                .any(|c| c.start == d.start && c.len == d.len)
            {
                cells.push(Cell {
                    value: unknown_content(&d.value),
                    ..d.clone()
                });
            }
        }
        cells.sort_by_key(|c| (c.start, c.len));
        let wild = match (&self.wild, &other.wild) {
            (Some(a), Some(b)) => Some(a.join(b)),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        Memory { cells, wild }
    }
}

/// Combine provenance without the constant.
fn merge(acc: AbsValue, v: &AbsValue) -> AbsValue {
    let mut out = acc;
    out.defs.extend(v.defs.iter().copied());
    out.taint.extend(v.taint.iter().cloned());
    out.compared |= v.compared;
    out
}

fn unknown_content(v: &AbsValue) -> AbsValue {
    let mut v = v.clone();
    v.konst = None;
    v.mapping_base = None;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use ruint::aliases::U256;

    fn k(v: u64) -> AbsValue {
        AbsValue::constant(U256::from(v))
    }

    fn with_def(v: u64, def: usize) -> AbsValue {
        let mut a = k(v);
        a.defs.insert(def);
        a
    }

    #[test]
    fn exact_word_round_trips() {
        let mut m = Memory::default();
        m.write(&k(0x40), &k(32), with_def(0x80, 5));
        let r = m.read(&k(0x40), &k(32));
        assert!(r.exact);
        assert_eq!(r.value.konst, Some(U256::from(0x80)));
        assert!(r.value.defs.contains(&5));
    }

    #[test]
    fn overwrite_replaces() {
        let mut m = Memory::default();
        m.write(&k(0), &k(32), with_def(1, 1));
        m.write(&k(0), &k(32), with_def(2, 2));
        let r = m.read(&k(0), &k(32));
        assert_eq!(r.value.konst, Some(U256::from(2)));
        assert!(!r.value.defs.contains(&1));
    }

    #[test]
    fn wild_write_reaches_heap_not_scratch() {
        let mut m = Memory::default();
        m.write(&k(0), &k(32), with_def(1, 1));
        m.write(&AbsValue::top(), &k(32), with_def(9, 9));
        assert!(!m.read(&k(0), &k(32)).value.defs.contains(&9));
        assert!(m.read(&k(0x100), &k(32)).value.defs.contains(&9));
        assert!(m.read(&AbsValue::top(), &k(32)).value.defs.contains(&1));
    }

    #[test]
    fn partial_overlap_merges_without_constant() {
        let mut m = Memory::default();
        m.write(&k(0x80), &k(32), with_def(7, 1));
        let r = m.read(&k(0x90), &k(32));
        assert!(!r.exact);
        assert_eq!(r.value.konst, None);
        assert!(r.value.defs.contains(&1));
    }
}
