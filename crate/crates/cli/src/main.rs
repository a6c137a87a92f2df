use clap::{Args, Parser, Subcommand, ValueEnum};
use smvscan_core::boundary::ModelWeights;
use smvscan_core::db::{build_db, format_db, load_db, load_knowledge, parse_manifest};
use smvscan_core::detector::Names;
use smvscan_core::flow::{ExploreConfig, DEFAULT_MAX_DEPTH};
use smvscan_core::matcher::{Thresholds, DEFAULT_THETA1, DEFAULT_THETA2};
use smvscan_core::pipeline::{
    analyze_file, scan_analysis, BoundaryMode, Databases, PipelineConfig,
};
use smvscan_core::report::{contract_report, error_report, merged_names, ContractReport, Report};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

const EXIT_CLEAN: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_FOUND: u8 = 2;

#[derive(Parser)]
#[command(
    name = "smvscan",
    version,
    about = "Find subcontract misuse in EVM runtime bytecode"
)]
struct Cli {
    /// More logging on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan runtime bytecode files (.hex or .bin).
    Scan(ScanArgs),
    /// Database maintenance.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Re-render a JSON report.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DbCommand {
    /// Extract signatures for every manifest row.
    Build(BuildArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Boundary {
    Heuristic,
    Model,
    Both,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Subcontract signature database.
    #[arg(long, env = "SMVSCAN_DB")]
    db: PathBuf,
    /// Knowledge base of conflicts and access-control rules.
    #[arg(long, env = "SMVSCAN_KNOWLEDGE")]
    knowledge: PathBuf,
    #[arg(long, env = "SMVSCAN_THETA1", default_value_t = DEFAULT_THETA1, allow_negative_numbers = true)]
    theta1: f64,
    #[arg(long, env = "SMVSCAN_THETA2", default_value_t = DEFAULT_THETA2, allow_negative_numbers = true)]
    theta2: f64,
    /// Length score as |F_s|/|F_c| instead of min/max.
    #[arg(long, env = "SMVSCAN_PN_VERBATIM")]
    pn_verbatim: bool,
    #[arg(
        long,
        env = "SMVSCAN_BOUNDARY",
        value_enum,
        default_value = "heuristic"
    )]
    boundary: Boundary,
    /// SMVW weight file, required for model and both.
    #[arg(long, env = "SMVSCAN_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "SMVSCAN_FORMAT", value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SMVSCAN_MAX_DEPTH", default_value_t = DEFAULT_MAX_DEPTH)]
    max_depth: usize,
    /// Abstract stack depth.
    #[arg(long, env = "SMVSCAN_STACK_LIMIT", default_value_t = ExploreConfig::default().stack_limit)]
    stack_limit: usize,
    /// Contracts analysed concurrently (0 = all cores).
    #[arg(long, env = "SMVSCAN_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Public method names: `name(types)` or `selector<TAB>name` per line.
    #[arg(long, env = "SMVSCAN_NAMES")]
    names: Option<PathBuf>,
    /// Per-stage timing on stderr.
    #[arg(long)]
    timing: bool,
    /// `blockN -> blockM kind` lines.
    #[arg(long)]
    dump_cfg: bool,
    /// `start end kind source` lines.
    #[arg(long)]
    dump_regions: bool,
    /// `region_id<TAB>intra<TAB>chain` lines.
    #[arg(long)]
    dump_signatures: bool,
    /// `region subcontract version method p_t p_n best` lines.
    #[arg(long)]
    dump_matches: bool,
}

#[derive(Args)]
struct BuildArgs {
    /// Directory holding the bytecode files named in the manifest.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "SMVSCAN_MAX_DEPTH", default_value_t = DEFAULT_MAX_DEPTH)]
    max_depth: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors, which would read as "traces found".
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_CLEAN
            });
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Scan(a) => scan(a),
        Command::Db {
            command: DbCommand::Build(a),
        } => db_build(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("smvscan: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn scan(a: ScanArgs) -> Result<u8, String> {
    for (flag, v) in [("--theta1", a.theta1), ("--theta2", a.theta2)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(format!("{flag} must lie in (0, 1], got {v}"));
        }
    }
    let boundary = match a.boundary {
        Boundary::Heuristic => BoundaryMode::Heuristic,
        Boundary::Model => BoundaryMode::Model,
        Boundary::Both => BoundaryMode::Both,
    };
    let model = match (boundary, &a.model) {
        (BoundaryMode::Heuristic, Some(_)) => {
            return Err("--model only applies to --boundary model|both".into())
        }
        (BoundaryMode::Heuristic, None) => None,
        (_, None) => return Err("--boundary model|both needs --model".into()),
        (_, Some(p)) => Some(Arc::new(
            ModelWeights::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
    };
    let dbs = Databases {
        records: load_db(&a.db).map_err(|e| format!("{}: {e}", a.db.display()))?,
        knowledge: load_knowledge(&a.knowledge)
            .map_err(|e| format!("{}: {e}", a.knowledge.display()))?,
    };
    for m in dbs.knowledge.unresolved(&dbs.records) {
        tracing::warn!("knowledge entry names {m}, which has no database record");
    }
    let names = match &a.names {
        Some(p) => Names::parse(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        None => Names::default(),
    };
    let names = merged_names(&names, &dbs);
    let config = PipelineConfig {
        explore: ExploreConfig {
            stack_limit: a.stack_limit,
            ..ExploreConfig::default()
        },
        boundary,
        model,
        max_depth: a.max_depth,
    };
    let thresholds = Thresholds {
        theta1: a.theta1,
        theta2: a.theta2,
        pn_verbatim: a.pn_verbatim,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| e.to_string())?;
    let outputs: Vec<(ContractReport, String, String)> = pool.install(|| {
        use rayon::prelude::*;
        a.inputs
            .par_iter()
            .map(|path| {
                let input = path.display().to_string();
                let analysis = match analyze_file(path, &config) {
                    Ok(x) => x,
                    Err(e) => {
                        return (
                            error_report(&input, &e.to_string()),
                            String::new(),
                            String::new(),
                        )
                    }
                };
                let r = scan_analysis(analysis, &dbs, &thresholds, &names);
                let mut dump = String::new();
                if a.dump_cfg {
                    let _ = writeln!(dump, "# cfg {input}");
                    dump.push_str(&r.analysis.cfg.dump());
                }
                if a.dump_regions {
                    let _ = writeln!(dump, "# regions {input}");
                    for reg in &r.analysis.regions {
                        let _ = writeln!(dump, "{}", reg.dump_line());
                    }
                }
                if a.dump_signatures {
                    let _ = writeln!(dump, "# signatures {input}");
                    for s in &r.analysis.signatures {
                        let _ = writeln!(dump, "{}", s.dump_line());
                    }
                }
                if a.dump_matches {
                    let _ = writeln!(dump, "# matches {input}");
                    for m in &r.matches {
                        let _ = writeln!(dump, "{}", m.tsv_line());
                    }
                }
                let mut timing = String::new();
                if a.timing {
                    let t = r.timings();
                    let _ = write!(timing, "timing {input}");
                    for (stage, d) in t.rows() {
                        let _ = write!(timing, " {stage}={:.3}ms", d.as_secs_f64() * 1e3);
                    }
                    let _ = writeln!(timing, " total={:.3}ms", t.total().as_secs_f64() * 1e3);
                }
                (contract_report(&input, &r, &dbs), dump, timing)
            })
            .collect()
    });

    let mut contracts = Vec::new();
    for (c, dump, timing) in outputs {
        print!("{dump}");
        eprint!("{timing}");
        if let Some(e) = &c.error {
            eprintln!("smvscan: {e}");
        }
        contracts.push(c);
    }
    let report = Report::new(contracts);
    let text = match a.format {
        Format::Json => report.to_json() + "\n",
        Format::Text => report.to_text(),
    };
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(if report.has_errors() {
        EXIT_ERROR
    } else if report.trace_count() > 0 {
        EXIT_FOUND
    } else {
        EXIT_CLEAN
    })
}

fn db_build(a: BuildArgs) -> Result<u8, String> {
    let manifest = parse_manifest(&read(&a.manifest)?)
        .map_err(|e| format!("{}: {e}", a.manifest.display()))?;
    let config = PipelineConfig {
        max_depth: a.max_depth,
        ..PipelineConfig::heuristic()
    };
    let (records, errors) = build_db(&a.input, &manifest, &config);
    for e in &errors {
        eprintln!("smvscan: {e}");
    }
    std::fs::write(&a.out, format_db(&records)).map_err(|e| format!("{}: {e}", a.out.display()))?;
    eprintln!("{} records, {} failures", records.len(), errors.len());
    Ok(if !manifest.is_empty() && records.is_empty() {
        EXIT_ERROR
    } else {
        EXIT_CLEAN
    })
}

fn report(a: ReportArgs) -> Result<u8, String> {
    let r =
        Report::from_json(&read(&a.input)?).map_err(|e| format!("{}: {e}", a.input.display()))?;
    match a.format {
        Format::Json => println!("{}", r.to_json()),
        Format::Text => print!("{}", r.to_text()),
    }
    Ok(EXIT_CLEAN)
}
