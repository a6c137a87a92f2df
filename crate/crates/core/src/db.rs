//! Subcontract signature records and the knowledge base.
//!
//! Both files are UTF-8, one record per line, `#` starts a comment line.
//! Records are tab-separated:
//! `subcontract version method selector visibility intra chain`
//! with `-` for a missing selector. Knowledge lines are whitespace-separated:
//!
//! ```text
//! conflict SwapUtils._xp MetaSwapUtils._xp src=NerveReport
//! access-control Address.CallWithValue params=1,2 guard=value-bound sensitive=ETH-balance src=RabbyReport
//! ```

use crate::bytecode::load_file;
use crate::pipeline::{analyze_stream, PipelineConfig};
use crate::signature::{format_symbols, parse_symbols, FeatureSymbol, MethodSignature};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DB_HEADER: &str = "# subcontract\tversion\tmethod\tselector\tvisibility\tintra\tchain";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: record {record}: invalid symbol {token:?}")]
    InvalidSymbol {
        line: usize,
        record: String,
        token: String,
    },
    #[error("line {line}: unknown kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
}

fn read(path: &Path) -> Result<String, DbError> {
    std::fs::read_to_string(path).map_err(|source| DbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Internal,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::Public => "public",
            Visibility::Internal => "internal",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "public" | "external" => Some(Visibility::Public),
            "internal" | "private" => Some(Visibility::Internal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubcontractRecord {
    pub subcontract: String,
    pub version: String,
    pub method: String,
    pub selector: Option<u32>,
    pub visibility: Visibility,
    #[serde(skip)]
    pub intra: Vec<FeatureSymbol>,
    #[serde(skip)]
    pub chain: Vec<FeatureSymbol>,
}

impl SubcontractRecord {
    pub fn key(&self) -> (String, String, String) {
        (
            self.subcontract.clone(),
            self.version.clone(),
            self.method.clone(),
        )
    }

    /// `Subcontract@version.method`.
    pub fn key_string(&self) -> String {
        format!("{}@{}.{}", self.subcontract, self.version, self.method)
    }

    pub fn method_ref(&self) -> MethodRef {
        MethodRef {
            subcontract: self.subcontract.clone(),
            method: self.method.clone(),
        }
    }

    pub fn signature(&self) -> MethodSignature {
        MethodSignature {
            region_id: usize::MAX,
            intra: self.intra.clone(),
            chain: self.chain.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.subcontract,
            self.version,
            self.method,
            self.selector
                .map_or("-".to_string(), |s| format!("{s:08x}")),
            self.visibility.as_str(),
            format_symbols(&self.intra),
            format_symbols(&self.chain)
        )
    }
}

pub fn parse_db(text: &str) -> Result<Vec<SubcontractRecord>, DbError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 7 {
            return Err(DbError::Parse {
                line,
                reason: format!("expected 7 tab-separated fields, found {}", f.len()),
            });
        }
        let selector = match f[3] {
            "-" => None,
            s => Some(
                u32::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|_| {
                    DbError::Parse {
                        line,
                        reason: format!("bad selector {s:?}"),
                    }
                })?,
            ),
        };
        let visibility = Visibility::parse(f[4]).ok_or_else(|| DbError::Parse {
            line,
            reason: format!("bad visibility {:?}", f[4]),
        })?;
        let record = format!("{}@{}.{}", f[0], f[1], f[2]);
        let sym = |s: &str| {
            parse_symbols(s).map_err(|e| DbError::InvalidSymbol {
                line,
                record: record.clone(),
                token: e.token,
            })
        };
        let r = SubcontractRecord {
            subcontract: f[0].to_string(),
            version: f[1].to_string(),
            method: f[2].to_string(),
            selector,
            visibility,
            intra: sym(f[5])?,
            chain: sym(f[6])?,
        };
        if !seen.insert(r.key()) {
            return Err(DbError::DuplicateKey { line, key: record });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_db(path: &Path) -> Result<Vec<SubcontractRecord>, DbError> {
    parse_db(&read(path)?)
}

/// Empty string for no records, header plus one line per record otherwise.
pub fn format_db(records: &[SubcontractRecord]) -> String {
    if records.is_empty() {
        return String::new();
    }
    let mut s = String::from(DB_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MethodRef {
    pub subcontract: String,
    pub method: String,
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.subcontract, self.method)
    }
}

impl MethodRef {
    fn parse(s: &str) -> Option<Self> {
        let (a, b) = s.split_once('.')?;
        (!a.is_empty() && !b.is_empty() && !b.contains('.')).then(|| MethodRef {
            subcontract: a.to_string(),
            method: b.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardKind {
    CallerCheck,
    ValueBound,
    ReentrancyGuard,
}

impl GuardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GuardKind::CallerCheck => "caller-check",
            GuardKind::ValueBound => "value-bound",
            GuardKind::ReentrancyGuard => "reentrancy-guard",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            GuardKind::CallerCheck,
            GuardKind::ValueBound,
            GuardKind::ReentrancyGuard,
        ]
        .into_iter()
        .find(|g| g.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KnowledgeEntry {
    Conflict {
        members: [MethodRef; 2],
        source: String,
    },
    AccessControl {
        method: MethodRef,
        /// 1-based parameter positions.
        params: Vec<usize>,
        guard: GuardKind,
        sensitive: Option<String>,
        source: String,
    },
}

impl KnowledgeEntry {
    pub fn source(&self) -> &str {
        match self {
            KnowledgeEntry::Conflict { source, .. }
            | KnowledgeEntry::AccessControl { source, .. } => source,
        }
    }

    pub fn members(&self) -> Vec<&MethodRef> {
        match self {
            KnowledgeEntry::Conflict { members, .. } => members.iter().collect(),
            KnowledgeEntry::AccessControl { method, .. } => vec![method],
        }
    }

    pub fn to_line(&self) -> String {
        match self {
            KnowledgeEntry::Conflict { members, source } => {
                format!("conflict {} {} src={source}", members[0], members[1])
            }
            KnowledgeEntry::AccessControl {
                method,
                params,
                guard,
                sensitive,
                source,
            } => {
                let p: Vec<String> = params.iter().map(|p| p.to_string()).collect();
                let mut s = format!(
                    "access-control {method} params={} guard={}",
                    p.join(","),
                    guard.as_str()
                );
                if let Some(v) = sensitive {
                    s.push_str(&format!(" sensitive={v}"));
                }
                s.push_str(&format!(" src={source}"));
                s
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KnowledgeBase {
    pub entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn is_conflict(&self, a: &MethodRef, b: &MethodRef) -> Option<usize> {
        self.entries.iter().position(|e| match e {
            KnowledgeEntry::Conflict { members, .. } => {
                (&members[0] == a && &members[1] == b) || (&members[0] == b && &members[1] == a)
            }
            _ => false,
        })
    }

    pub fn access_control(
        &self,
        m: &MethodRef,
    ) -> impl Iterator<Item = (usize, &KnowledgeEntry)> + '_ {
        let m = m.clone();
        self.entries.iter().enumerate().filter(
            move |(_, e)| matches!(e, KnowledgeEntry::AccessControl { method, .. } if *method == m),
        )
    }

    /// Members that name no loaded record.
    pub fn unresolved(&self, records: &[SubcontractRecord]) -> Vec<MethodRef> {
        let known: BTreeSet<MethodRef> = records.iter().map(|r| r.method_ref()).collect();
        let mut out: Vec<MethodRef> = self
            .entries
            .iter()
            .flat_map(|e| e.members())
            .filter(|m| !known.contains(*m))
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

pub fn parse_knowledge(text: &str) -> Result<KnowledgeBase, DbError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let err = |reason: String| DbError::Parse { line, reason };
        let mref =
            |s: &str| MethodRef::parse(s).ok_or_else(|| err(format!("bad method reference {s:?}")));
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        let mut positional = Vec::new();
        for tok in &toks[1..] {
            match tok.split_once('=') {
                Some((k, v)) => {
                    if kv.insert(k, v).is_some() {
                        return Err(err(format!("repeated field {k}")));
                    }
                }
                None => positional.push(*tok),
            }
        }
        let source = kv
            .remove("src")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| err("missing provenance (src=)".into()))?
            .to_string();
        let entry = match toks[0] {
            "conflict" => {
                if positional.len() != 2 || !kv.is_empty() {
                    return Err(err("conflict takes two method references and src=".into()));
                }
                let (a, b) = (mref(positional[0])?, mref(positional[1])?);
                if a == b {
                    return Err(err("conflict members must differ".into()));
                }
                KnowledgeEntry::Conflict {
                    members: [a, b],
                    source,
                }
            }
            "access-control" => {
                if positional.len() != 1 {
                    return Err(err("access-control takes one method reference".into()));
                }
                let params = kv
                    .remove("params")
                    .ok_or_else(|| err("missing params=".into()))?
                    .split(',')
                    .map(|p| p.parse::<usize>().ok().filter(|&n| n >= 1))
                    .collect::<Option<Vec<_>>>()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| err("params must be 1-based integers".into()))?;
                let g = kv
                    .remove("guard")
                    .ok_or_else(|| err("missing guard=".into()))?;
                let guard =
                    GuardKind::parse(g).ok_or_else(|| err(format!("unknown guard {g:?}")))?;
                let sensitive = kv.remove("sensitive").map(str::to_string);
                if let Some(k) = kv.keys().next() {
                    return Err(err(format!("unknown field {k}")));
                }
                KnowledgeEntry::AccessControl {
                    method: mref(positional[0])?,
                    params,
                    guard,
                    sensitive,
                    source,
                }
            }
            other => {
                return Err(DbError::UnknownKind {
                    line,
                    kind: other.to_string(),
                })
            }
        };
        entries.push(entry);
    }
    Ok(KnowledgeBase { entries })
}

pub fn load_knowledge(path: &Path) -> Result<KnowledgeBase, DbError> {
    parse_knowledge(&read(path)?)
}

pub fn format_knowledge(kb: &KnowledgeBase) -> String {
    kb.entries.iter().map(|e| e.to_line() + "\n").collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Locator {
    Offset(usize),
    Selector(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub file: String,
    pub subcontract: String,
    pub version: String,
    pub method: String,
    pub locator: Locator,
    pub visibility: Visibility,
}

/// `file subcontract version method locator visibility`, tab-separated;
/// locator is `offset=0x..` or `selector=0x..`.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, DbError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        let err = |reason: String| DbError::Parse { line, reason };
        if f.len() != 6 {
            return Err(err(format!(
                "expected 6 tab-separated fields, found {}",
                f.len()
            )));
        }
        let hex = |s: &str| u64::from_str_radix(s.trim_start_matches("0x"), 16).ok();
        let locator = match f[4].split_once('=') {
            Some(("offset", v)) => hex(v).map(|o| Locator::Offset(o as usize)),
            Some(("selector", v)) => hex(v)
                .and_then(|s| u32::try_from(s).ok())
                .map(Locator::Selector),
            _ => None,
        }
        .ok_or_else(|| err(format!("bad locator {:?}", f[4])))?;
        out.push(ManifestRow {
            file: f[0].to_string(),
            subcontract: f[1].to_string(),
            version: f[2].to_string(),
            method: f[3].to_string(),
            locator,
            visibility: Visibility::parse(f[5])
                .ok_or_else(|| err(format!("bad visibility {:?}", f[5])))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Error)]
#[error("{file}: {reason}")]
pub struct BuildError {
    pub file: String,
    pub reason: String,
}

/// Signatures for every manifest row, sorted by key. Failures are collected
/// per row and the build carries on.
pub fn build_db(
    dir: &Path,
    manifest: &[ManifestRow],
    config: &PipelineConfig,
) -> (Vec<SubcontractRecord>, Vec<BuildError>) {
    let mut by_file: BTreeMap<&str, Vec<&ManifestRow>> = BTreeMap::new();
    for row in manifest {
        by_file.entry(&row.file).or_default().push(row);
    }
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (file, rows) in by_file {
        let analysis = load_file(&dir.join(file))
            .map_err(|e| e.to_string())
            .and_then(|s| analyze_stream(s, config).map_err(|e| e.to_string()));
        let analysis = match analysis {
            Ok(a) => a,
            Err(reason) => {
                errors.extend(rows.iter().map(|_| BuildError {
                    file: file.to_string(),
                    reason: reason.clone(),
                }));
                continue;
            }
        };
        for row in rows {
            let region = match row.locator {
                Locator::Offset(o) => analysis
                    .regions
                    .iter()
                    .filter(|r| r.start == o)
                    .max_by_key(|r| r.len()),
                Locator::Selector(s) => analysis.regions.iter().find(|r| r.selector == Some(s)),
            };
            let Some(region) = region else {
                errors.push(BuildError {
                    file: file.to_string(),
                    reason: format!(
                        "{}.{}: no region at {:?}",
                        row.subcontract, row.method, row.locator
                    ),
                });
                continue;
            };
            let sig = &analysis.signatures[region.id];
            records.push(SubcontractRecord {
                subcontract: row.subcontract.clone(),
                version: row.version.clone(),
                method: row.method.clone(),
                selector: match row.locator {
                    Locator::Selector(s) => Some(s),
                    Locator::Offset(_) => region.selector,
                },
                visibility: row.visibility,
                intra: sig.intra.clone(),
                chain: sig.chain.clone(),
            });
        }
    }
    records.sort_by_key(|r| r.key());
    let mut seen = BTreeSet::new();
    records.retain(|r| {
        let fresh = seen.insert(r.key());
        if !fresh {
            errors.push(BuildError {
                file: String::new(),
                reason: format!("duplicate key {}", r.key_string()),
            });
        }
        fresh
    });
    (records, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "# subcontract\tversion\tmethod\tselector\tvisibility\tintra\tchain\n\
SwapUtils\t1.0.0\t_xp\t-\tinternal\tR W\tR W I\n\
Address\t4.9.0\tCallWithValue\ta9059cbb\tinternal\tC0 Re\tC0 Re\n";

    #[test]
    fn empty_is_empty() {
        assert!(parse_db("").unwrap().is_empty());
        assert!(parse_knowledge("").unwrap().entries.is_empty());
    }

    #[test]
    fn two_rows_in_order() {
        let r = parse_db(TWO).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].method, "_xp");
        assert_eq!(r[1].selector, Some(0xa9059cbb));
        assert_eq!(format_db(&r), TWO);
    }

    #[test]
    fn duplicate_key() {
        let dup = format!("{TWO}SwapUtils\t1.0.0\t_xp\t-\tinternal\tR\tR\n");
        assert!(matches!(
            parse_db(&dup),
            Err(DbError::DuplicateKey { line: 4, .. })
        ));
    }

    #[test]
    fn invalid_symbol_names_record() {
        let bad = "X\t1\tm\t-\tinternal\tR X\tR\n";
        match parse_db(bad) {
            Err(DbError::InvalidSymbol { token, record, .. }) => {
                assert_eq!(token, "X");
                assert_eq!(record, "X@1.m");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn knowledge_entries() {
        let kb = parse_knowledge(
            "conflict SwapUtils._xp MetaSwapUtils._xp src=NerveReport\n\
             access-control Address.CallWithValue params=1,2 guard=value-bound sensitive=ETH-balance src=RabbyReport\n",
        )
        .unwrap();
        assert_eq!(kb.entries.len(), 2);
        match &kb.entries[1] {
            KnowledgeEntry::AccessControl { params, guard, .. } => {
                assert_eq!(params, &vec![1, 2]);
                assert_eq!(*guard, GuardKind::ValueBound);
            }
            e => panic!("{e:?}"),
        }
        let a = MethodRef::parse("MetaSwapUtils._xp").unwrap();
        let b = MethodRef::parse("SwapUtils._xp").unwrap();
        assert_eq!(kb.is_conflict(&a, &b), Some(0));
        let text = format_knowledge(&kb);
        assert_eq!(parse_knowledge(&text).unwrap(), kb);
        assert_eq!(format_knowledge(&parse_knowledge(&text).unwrap()), text);
    }

    #[test]
    fn knowledge_errors() {
        assert!(matches!(
            parse_knowledge("conflictx A.b C.d src=x"),
            Err(DbError::UnknownKind { .. })
        ));
        assert!(matches!(
            parse_knowledge("conflict A.b C.d"),
            Err(DbError::Parse { .. })
        ));
        assert!(matches!(
            parse_knowledge("conflict A.b A.b src=x"),
            Err(DbError::Parse { .. })
        ));
        assert!(matches!(
            parse_knowledge("access-control A.b params= guard=caller-check src=x"),
            Err(DbError::Parse { .. })
        ));
        assert!(matches!(
            parse_knowledge("access-control A.b params=0 guard=caller-check src=x"),
            Err(DbError::Parse { .. })
        ));
    }

    #[test]
    fn manifest_rows() {
        let m =
            parse_manifest("# header\nA.hex\tAddress\t4.9.0\tsendValue\toffset=0xec\tinternal\n")
                .unwrap();
        assert_eq!(m[0].locator, Locator::Offset(0xec));
        assert!(parse_manifest("A.hex\tA\t1\tm\tnowhere\tinternal\n").is_err());
    }

    #[test]
    fn unresolved_members() {
        let kb = parse_knowledge("conflict SwapUtils._xp Other.f src=r").unwrap();
        let recs = parse_db(TWO).unwrap();
        let u = kb.unresolved(&recs);
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].to_string(), "Other.f");
    }
}
