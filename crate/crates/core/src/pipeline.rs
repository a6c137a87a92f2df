//! End-to-end analysis of one contract.

use crate::boundary::{
    labels_to_regions, merge_regions, recover_heuristic, recover_model, MethodRegion, ModelError,
    ModelWeights,
};
use crate::bytecode::{load_file, InstructionStream, LoadError};
use crate::db::{KnowledgeBase, SubcontractRecord};
use crate::detector::{detect, Detection, Names};
use crate::flow::{
    build_cfg_with, call_graph, CallGraphEdge, ControlFlowGraph, ExploreConfig, DEFAULT_MAX_DEPTH,
};
use crate::matcher::{drop_wrapper_matches, match_signatures, ReuseMatch, Thresholds};
use crate::signature::{extract_signatures, MethodSignature};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    #[default]
    Heuristic,
    Model,
    Both,
}

impl FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(BoundaryMode::Heuristic),
            "model" => Ok(BoundaryMode::Model),
            "both" => Ok(BoundaryMode::Both),
            _ => Err(format!(
                "unknown boundary mode {s:?} (heuristic|model|both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub explore: ExploreConfig,
    pub boundary: BoundaryMode,
    pub model: Option<Arc<ModelWeights>>,
    pub max_depth: usize,
}

impl PipelineConfig {
    pub fn heuristic() -> Self {
        PipelineConfig {
            max_depth: DEFAULT_MAX_DEPTH,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("boundary mode needs a model file")]
    MissingModel,
    #[error("model: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub decode: Duration,
    pub flow: Duration,
    pub boundary: Duration,
    pub signatures: Duration,
    pub matching: Duration,
    pub detection: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.decode + self.flow + self.boundary + self.signatures + self.matching + self.detection
    }

    pub fn rows(&self) -> [(&'static str, Duration); 6] {
        [
            ("decode", self.decode),
            ("flow", self.flow),
            ("boundary", self.boundary),
            ("signatures", self.signatures),
            ("matching", self.matching),
            ("detection", self.detection),
        ]
    }
}

#[derive(Debug)]
pub struct Analysis {
    pub cfg: ControlFlowGraph,
    pub regions: Vec<MethodRegion>,
    pub edges: Vec<CallGraphEdge>,
    /// Indexed by region id.
    pub signatures: Vec<MethodSignature>,
    pub timings: StageTimings,
}

pub fn recover_regions(
    cfg: &ControlFlowGraph,
    config: &PipelineConfig,
) -> Result<Vec<MethodRegion>, PipelineError> {
    let heuristic = recover_heuristic(cfg);
    if config.boundary == BoundaryMode::Heuristic {
        return Ok(heuristic);
    }
    let weights = config.model.as_ref().ok_or(PipelineError::MissingModel)?;
    let labels = recover_model(&cfg.stream, weights)?;
    let model = labels_to_regions(&labels, cfg);
    Ok(merge_regions(
        &heuristic,
        &model,
        config.boundary == BoundaryMode::Both,
    ))
}

pub fn analyze_stream(
    stream: InstructionStream,
    config: &PipelineConfig,
) -> Result<Analysis, PipelineError> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let cfg = build_cfg_with(stream, config.explore);
    timings.flow = t.elapsed();
    if cfg.facts.truncated {
        tracing::warn!("exploration budget exhausted; facts are partial");
    }

    let t = Instant::now();
    let regions = recover_regions(&cfg, config)?;
    timings.boundary = t.elapsed();

    let t = Instant::now();
    let edges = call_graph(&cfg, &regions);
    let depth = if config.max_depth == 0 {
        DEFAULT_MAX_DEPTH
    } else {
        config.max_depth
    };
    let signatures = extract_signatures(&cfg, &regions, &edges, depth);
    timings.signatures = t.elapsed();
    Ok(Analysis {
        cfg,
        regions,
        edges,
        signatures,
        timings,
    })
}

pub fn analyze_file(path: &Path, config: &PipelineConfig) -> Result<Analysis, PipelineError> {
    let t = Instant::now();
    let stream = load_file(path)?;
    let decode = t.elapsed();
    let mut a = analyze_stream(stream, config)?;
    a.timings.decode = decode;
    Ok(a)
}

#[derive(Debug, Clone, Default)]
pub struct Databases {
    pub records: Vec<SubcontractRecord>,
    pub knowledge: KnowledgeBase,
}

#[derive(Debug)]
pub struct ScanResult {
    pub analysis: Analysis,
    pub matches: Vec<ReuseMatch>,
    pub detection: Detection,
}

impl ScanResult {
    pub fn timings(&self) -> StageTimings {
        self.analysis.timings
    }
}

/// Matching and detection over a finished analysis.
pub fn scan_analysis(
    mut analysis: Analysis,
    dbs: &Databases,
    thresholds: &Thresholds,
    names: &Names,
) -> ScanResult {
    let t = Instant::now();
    let matches = drop_wrapper_matches(
        match_signatures(&analysis.signatures, &dbs.records, thresholds),
        &analysis.edges,
    );
    analysis.timings.matching = t.elapsed();
    let t = Instant::now();
    let detection = detect(
        &analysis,
        &matches,
        &dbs.records,
        &dbs.knowledge,
        thresholds,
        names,
    );
    analysis.timings.detection = t.elapsed();
    ScanResult {
        analysis,
        matches,
        detection,
    }
}

pub fn scan_file(
    path: &Path,
    config: &PipelineConfig,
    dbs: &Databases,
    thresholds: &Thresholds,
    names: &Names,
) -> Result<ScanResult, PipelineError> {
    Ok(scan_analysis(
        analyze_file(path, config)?,
        dbs,
        thresholds,
        names,
    ))
}
