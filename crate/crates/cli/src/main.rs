//! Command-line surface over the engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or format error,
//! 3 validation failure, 4 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qeforge_core::config::Config;
use qeforge_core::corpus::{ingest, load_corpus, save_corpus, Corpus, RawRecord, SourceKind};
use qeforge_core::eval::{
    ablation_table, make_benchmark, run_ablation, run_stages, stage_table, DEFAULT_K,
};
use qeforge_core::knowledge_graph::{GraphNode, KnowledgeGraph, NodeType};
use qeforge_core::orchestration::{
    generate_test_plan, run_pipeline, BusinessLogicRef, EngineRefs, HistoricalCorpus,
    RequirementSet, StubGenerator, TestPlan,
};
use qeforge_core::retrieval::{retrieve, RetrievalParams, StageMode};
use qeforge_core::traceability::{coverage, impact, matrix, TraceStore};
use qeforge_core::validation::{validate_artifact, Artifact, ValidationBudget};
use qeforge_core::vector_index::VectorIndex;

#[derive(Parser)]
#[command(
    name = "qeforge",
    about = "Offline hybrid vector-graph RAG engine for quality-engineering artifacts",
    version,
    long_about = "Ingests a testing corpus, indexes it into a vector store and a typed \
knowledge graph, answers staged retrieval queries, generates test plans and cases through \
a deterministic multi-agent pipeline, and maintains bidirectional traceability.\n\n\
Configuration is a flat key=value file (see --config); every key has a built-in default:\n\
  embedder.dim=384  index.metric=cosine  retrieval.alpha=0.6  retrieval.gamma=0.5\n\
  retrieval.depth=2  retrieval.threshold=0.82  retrieval.token_budget=2000\n\
  retrieval.workers=8  impact.gamma=0.7  impact.depth=4  validation.perf_budget_ms=5000\n\
  validation.max_artifact_bytes=262144  conflict.authoritative_sources=\n\
  paths.corpus=corpus.jsonl  paths.index=index.json  paths.graph=graph.json  paths.trace=trace.json"
)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Emit machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw JSONL records into a redacted, chunked corpus.
    Ingest {
        /// Raw records, one JSON object per line.
        raw: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Vector index operations.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Knowledge-graph import and export.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Staged retrieval over the indexed corpus.
    Query {
        text: String,
        /// basic | vector | hybrid | agentic
        #[arg(long, default_value = "hybrid")]
        mode: String,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Artifact generation through the agent pipeline.
    Generate {
        #[command(subcommand)]
        command: GenerateCommand,
    },
    /// Traceability matrix and coverage.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Change-impact analysis from a graph node.
    Impact {
        #[arg(long)]
        node: String,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Seven-layer validation of a generated artifact.
    Validate { artifact: PathBuf },
    /// Synthetic-benchmark harnesses.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Build the vector index and a graph skeleton from a corpus file.
    Build {
        corpus: PathBuf,
        /// Output directory for index.json and graph.json.
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Validate a graph file and install it at the configured path.
    Import { file: PathBuf },
    /// Print the configured graph as JSON.
    Export,
}

#[derive(Subcommand)]
enum GenerateCommand {
    /// Synthesize a test plan for a requirement set.
    Plan(PlanArgs),
    /// Generate validated test cases for a saved plan.
    Cases {
        /// Path to a plan JSON produced by `generate plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Directory for the case artifacts.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// Comma-separated requirement node ids.
    #[arg(long, value_delimiter = ',')]
    req: Vec<String>,
    /// Comma-separated business-logic node ids.
    #[arg(long, value_delimiter = ',')]
    logic: Vec<String>,
    /// Comma-separated historical chunk ids; defaults to every
    /// legacy-test and execution-result chunk in the corpus.
    #[arg(long, value_delimiter = ',')]
    history: Vec<String>,
    /// Output file for the plan JSON.
    #[arg(short, long, default_value = "plan.json")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Write the requirements-by-cases matrix as CSV.
    Matrix {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the fraction of requirements with at least one case link.
    Coverage,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Four-stage retrieval progression on a generated benchmark.
    Stages {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Component-ablation scores on a generated benchmark.
    Ablation {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

enum CliError {
    Io(String),
    ValidationFailed,
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::ValidationFailed => 3,
            CliError::Internal(_) => 4,
        }
    }
}

fn io_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Io(msg) | CliError::Internal(msg) => eprintln!("error: {msg}"),
                CliError::ValidationFailed => eprintln!("validation failed"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn load_corpus_at(config: &Config) -> Result<Corpus, CliError> {
    let path = Path::new(&config.paths_corpus);
    if !path.exists() {
        return Err(CliError::Io(format!("corpus not found: {}", path.display())));
    }
    load_corpus(path).map_err(io_err)
}

fn load_index_at(config: &Config) -> Result<VectorIndex, CliError> {
    let path = Path::new(&config.paths_index);
    if !path.exists() {
        return Err(CliError::Io(format!("index not found: {}", path.display())));
    }
    VectorIndex::load(path).map_err(io_err)
}

fn load_graph_at(config: &Config) -> Result<KnowledgeGraph, CliError> {
    let path = Path::new(&config.paths_graph);
    if !path.exists() {
        return Err(CliError::Io(format!("graph not found: {}", path.display())));
    }
    KnowledgeGraph::load(path).map_err(io_err)
}

fn load_store_at(config: &Config) -> Result<TraceStore, CliError> {
    let path = Path::new(&config.paths_trace);
    if !path.exists() {
        return Ok(TraceStore::new());
    }
    TraceStore::load(path).map_err(io_err)
}

fn skeleton_node_type(kind: SourceKind) -> NodeType {
    match kind {
        SourceKind::Requirement => NodeType::Requirement,
        SourceKind::LegacyTest => NodeType::TestCase,
        SourceKind::BusinessProcessMap => NodeType::BusinessProcess,
        SourceKind::ConfigGuide => NodeType::Configuration,
        SourceKind::ChangeRequest => NodeType::ChangeRequest,
        SourceKind::ExecutionResult => NodeType::ExecutionResult,
        SourceKind::SapDoc => NodeType::Component,
    }
}

/// One node per document, typed from its source kind, carrying every
/// chunk of the document. Edges are left to `graph import`.
fn graph_skeleton(corpus: &Corpus) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::new();
    for chunk in &corpus.chunks {
        let doc_id = chunk.id.split('#').next().unwrap_or(&chunk.id).to_string();
        if graph.node(&doc_id).is_none() {
            let node = GraphNode {
                id: doc_id.clone(),
                node_type: skeleton_node_type(chunk.kind),
                label: chunk.title.clone(),
                attrs: Default::default(),
                chunk_refs: Default::default(),
            };
            graph.add_node(node).expect("doc ids are unique");
        }
        graph.add_chunk_ref(&doc_id, &chunk.id).expect("node just added");
    }
    graph
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(internal)?);
    Ok(())
}

fn run(cli: &Cli, config: &Config) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest { raw, out } => {
            let text = std::fs::read_to_string(raw).map_err(io_err)?;
            let mut records = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: RawRecord = serde_json::from_str(line)
                    .map_err(|e| CliError::Io(format!("record on line {}: {e}", i + 1)))?;
                records.push(record);
            }
            let corpus = ingest(&records).map_err(io_err)?;
            save_corpus(&corpus, out).map_err(io_err)?;
            if cli.json {
                print_json(&serde_json::json!({
                    "chunks": corpus.chunks.len(),
                    "redactions": corpus.chunks.iter().map(|c| c.redaction_count).sum::<u64>(),
                    "out": out.display().to_string(),
                }))?;
            } else {
                println!(
                    "ingested {} record(s) into {} chunk(s) -> {}",
                    records.len(),
                    corpus.chunks.len(),
                    out.display()
                );
            }
            Ok(())
        }
        Command::Index { command: IndexCommand::Build { corpus, out } } => {
            let corpus = load_corpus(corpus).map_err(io_err)?;
            std::fs::create_dir_all(out).map_err(io_err)?;
            let spec = qeforge_core::EmbedderSpec {
                dim: config.embedder_dim,
                ..Default::default()
            };
            let index =
                VectorIndex::build(&corpus, &spec, config.index_metric, config.retrieval_threshold)
                    .map_err(io_err)?;
            let index_path = out.join("index.json");
            index.save(&index_path).map_err(io_err)?;
            let graph_path = out.join("graph.json");
            graph_skeleton(&corpus).save(&graph_path).map_err(io_err)?;
            if cli.json {
                print_json(&serde_json::json!({
                    "vectors": corpus.chunks.len(),
                    "index": index_path.display().to_string(),
                    "graph": graph_path.display().to_string(),
                }))?;
            } else {
                println!(
                    "indexed {} chunk(s) -> {} (graph skeleton -> {})",
                    corpus.chunks.len(),
                    index_path.display(),
                    graph_path.display()
                );
            }
            Ok(())
        }
        Command::Graph { command } => match command {
            GraphCommand::Import { file } => {
                let graph = KnowledgeGraph::load(file).map_err(io_err)?;
                graph.save(Path::new(&config.paths_graph)).map_err(io_err)?;
                if cli.json {
                    print_json(&serde_json::json!({
                        "nodes": graph.node_count(),
                        "edges": graph.edge_count(),
                        "installed": config.paths_graph,
                    }))?;
                } else {
                    println!(
                        "imported {} node(s), {} edge(s) -> {}",
                        graph.node_count(),
                        graph.edge_count(),
                        config.paths_graph
                    );
                }
                Ok(())
            }
            GraphCommand::Export => {
                let graph = load_graph_at(config)?;
                println!("{}", graph.to_json());
                Ok(())
            }
        },
        Command::Query { text, mode, k } => {
            let mode = StageMode::parse(mode)
                .ok_or_else(|| CliError::Io(format!("unknown mode `{mode}`")))?;
            let corpus = load_corpus_at(config)?;
            let index = load_index_at(config)?;
            let graph = load_graph_at(config).unwrap_or_default();
            let params = RetrievalParams { k: *k, ..RetrievalParams::from_config(config, *k) };
            let bundle = retrieve(text, mode, &corpus, Some(&index), &graph, &params)
                .map_err(internal)?;
            if cli.json {
                print_json(&bundle)?;
            } else {
                println!("{:<28} {:>10}  origin", "chunk", "score");
                for item in &bundle.items {
                    let origin = match &item.origin {
                        qeforge_core::ItemOrigin::VectorHit => "vector".to_string(),
                        qeforge_core::ItemOrigin::Keyword => "keyword".to_string(),
                        qeforge_core::ItemOrigin::GraphExpansion { hops, .. } => {
                            format!("graph ({hops} hop)")
                        }
                    };
                    println!("{:<28} {:>10.4}  {origin}", item.chunk_id, item.score);
                }
                if !bundle.escalations.is_empty() {
                    println!("{} conflict(s) escalated for review", bundle.escalations.len());
                }
            }
            Ok(())
        }
        Command::Generate { command } => match command {
            GenerateCommand::Plan(args) => {
                if args.req.is_empty() {
                    return Err(CliError::Io("at least one --req id is required".to_string()));
                }
                let corpus = load_corpus_at(config)?;
                let index = load_index_at(config)?;
                let graph = load_graph_at(config)?;
                let history = if args.history.is_empty() {
                    qeforge_core::orchestration::default_history(&corpus)
                } else {
                    HistoricalCorpus(args.history.clone())
                };
                let refs = EngineRefs {
                    corpus: &corpus,
                    index: &index,
                    graph: &graph,
                    params: RetrievalParams::from_config(config, DEFAULT_K),
                };
                let out = generate_test_plan(
                    &RequirementSet(args.req.clone()),
                    &BusinessLogicRef(args.logic.clone()),
                    &history,
                    &refs,
                )
                .map_err(internal)?;
                let rendered = serde_json::to_string_pretty(&out.plan).map_err(internal)?;
                std::fs::write(&args.out, &rendered).map_err(io_err)?;
                if cli.json {
                    println!("{rendered}");
                } else {
                    println!(
                        "plan {} with {} objective(s) -> {}",
                        out.plan.id,
                        out.plan.objectives.len(),
                        args.out.display()
                    );
                }
                Ok(())
            }
            GenerateCommand::Cases { plan, out } => {
                let raw = std::fs::read_to_string(plan).map_err(io_err)?;
                let plan: TestPlan = serde_json::from_str(&raw).map_err(io_err)?;
                let corpus = load_corpus_at(config)?;
                let index = load_index_at(config)?;
                let graph = load_graph_at(config)?;
                let mut store = load_store_at(config)?;
                let requirements = RequirementSet(
                    plan.objectives.iter().map(|o| o.requirement_id.clone()).collect(),
                );
                let history = qeforge_core::orchestration::default_history(&corpus);
                let refs = EngineRefs {
                    corpus: &corpus,
                    index: &index,
                    graph: &graph,
                    params: RetrievalParams::from_config(config, DEFAULT_K),
                };
                let mut work_graph = graph.clone();
                let result = run_pipeline(
                    &requirements,
                    &BusinessLogicRef(Vec::new()),
                    &history,
                    &refs,
                    &mut work_graph,
                    &mut store,
                    &StubGenerator,
                    0,
                )
                .map_err(internal)?;
                std::fs::create_dir_all(out).map_err(io_err)?;
                for case in &result.cases {
                    let path = out.join(format!("{}.json", case.id));
                    std::fs::write(&path, serde_json::to_string_pretty(case).map_err(internal)?)
                        .map_err(io_err)?;
                }
                work_graph.save(Path::new(&config.paths_graph)).map_err(io_err)?;
                store.save(Path::new(&config.paths_trace)).map_err(io_err)?;
                if cli.json {
                    print_json(&result.cases)?;
                } else {
                    println!(
                        "generated {} case(s), {} trace link(s) -> {}",
                        result.cases.len(),
                        result.plan.trace_links.len(),
                        out.display()
                    );
                }
                Ok(())
            }
        },
        Command::Trace { command } => {
            let graph = load_graph_at(config)?;
            let store = load_store_at(config)?;
            match command {
                TraceCommand::Matrix { out } => {
                    let m = matrix(&store, &graph);
                    std::fs::write(out, m.to_csv()).map_err(io_err)?;
                    if cli.json {
                        print_json(&m)?;
                    } else {
                        println!(
                            "{} requirement(s) x {} case(s) -> {}",
                            m.rows.len(),
                            m.cols.len(),
                            out.display()
                        );
                    }
                    Ok(())
                }
                TraceCommand::Coverage => {
                    let value = coverage(&store, &graph).map_err(io_err)?;
                    if cli.json {
                        print_json(&serde_json::json!({ "coverage": value }))?;
                    } else {
                        println!("coverage {value:.4}");
                    }
                    Ok(())
                }
            }
        }
        Command::Impact { node, depth } => {
            let graph = load_graph_at(config)?;
            let store = load_store_at(config)?;
            let report = impact(
                node,
                &graph,
                &store,
                depth.unwrap_or(config.impact_depth),
                config.impact_gamma,
            )
            .map_err(io_err)?;
            if cli.json {
                print_json(&report)?;
            } else {
                println!("{:<20} {:<16} {:>8} {:>6}", "node", "type", "score", "hops");
                for a in &report.affected {
                    println!(
                        "{:<20} {:<16} {:>8.4} {:>6}",
                        a.node_id,
                        format!("{:?}", a.node_type),
                        a.impact_score,
                        a.hops
                    );
                }
            }
            Ok(())
        }
        Command::Validate { artifact } => {
            let raw = std::fs::read_to_string(artifact).map_err(io_err)?;
            let artifact = Artifact::parse(&raw).map_err(io_err)?;
            let graph = load_graph_at(config)?;
            let store = load_store_at(config)?;
            let budget = ValidationBudget {
                perf_budget_ms: config.validation_perf_budget_ms,
                max_artifact_bytes: config.validation_max_artifact_bytes,
                ..Default::default()
            };
            let report = validate_artifact(&artifact, &graph, &store, &budget);
            if cli.json {
                print_json(&report)?;
            } else {
                for entry in &report.entries {
                    let status = if entry.passed { "pass" } else { "FAIL" };
                    println!("{:<14} {status}", format!("{:?}", entry.layer));
                    for finding in &entry.findings {
                        println!("    {finding}");
                    }
                }
                println!("overall: {}", if report.overall { "pass" } else { "FAIL" });
            }
            if report.overall {
                Ok(())
            } else {
                Err(CliError::ValidationFailed)
            }
        }
        Command::Eval { command } => {
            let (seed, ablation) = match command {
                EvalCommand::Stages { seed } => (*seed, false),
                EvalCommand::Ablation { seed } => (*seed, true),
            };
            let benchmark = make_benchmark(seed, 10, 20, 0.5);
            if ablation {
                let report = run_ablation(&benchmark, DEFAULT_K);
                if cli.json {
                    print_json(&report)?;
                } else {
                    print!("{}", ablation_table(&report));
                }
            } else {
                let report = run_stages(&benchmark, DEFAULT_K);
                if cli.json {
                    print_json(&report)?;
                } else {
                    print!("{}", stage_table(&report));
                }
            }
            Ok(())
        }
    }
}
