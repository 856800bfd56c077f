//! agentopic: multi-agent explainable topic modeling over a news corpus.
//!
//! Subcommands: `preprocess` (clean a corpus), `run` (execute the seeded or
//! generative workflow), `record` (run while capturing a replay fixture),
//! `eval` (score predictions against ground truth), and `hierarchy`
//! (validate/prune/stats/export tooling). Exit codes: 0 success, 1
//! operational failure, 2 usage error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use agentopic_core::agents::{self, Mode, SeedSet};
use agentopic_core::corpus::{self, Corpus, CorpusFormat, PreprocessConfig};
use agentopic_core::evalkit::{self, EvalReport};
use agentopic_core::gateway::live::{LiveConfig, LiveProvider};
use agentopic_core::gateway::mock::MockProvider;
use agentopic_core::gateway::{Gateway, GatewayConfig, Provider, ReplayProvider, RetryPolicy};
use agentopic_core::hierarchy::{self, ExportFormat};
use agentopic_core::orchestrator::{self, Orchestrator, WorkflowConfig, UNRESOLVED_LABEL};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Operational(String),
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    fn operational(message: impl Into<String>) -> Self {
        CliError::Operational(message.into())
    }
}

#[derive(Parser)]
#[command(
    name = "agentopic",
    version,
    about = "Multi-agent explainable topic modeling"
)]
struct Cli {
    /// Config file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key by dotted name, e.g. --set backend.kind=mock
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the six-step text preprocessing pipeline over a corpus.
    Preprocess(PreprocessArgs),
    /// Execute the topic-modeling workflow.
    Run(RunArgs),
    /// Execute the workflow while recording every provider call to a
    /// replay fixture.
    Record(RunArgs),
    /// Score seeded predictions against ground-truth categories.
    Eval(EvalArgs),
    /// Validate, prune, inspect, or export a topic hierarchy file.
    Hierarchy(HierarchyArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Seeded,
    Generative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Live,
    Replay,
    Mock,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mode: ModeArg,
    /// Seed labels, one per line (required in seeded mode).
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Replay fixture to read (replay backend) or write (record command).
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendArg>,
    #[arg(long, value_name = "DIR")]
    output_dir: PathBuf,
    #[arg(long)]
    refinement_iterations: Option<u32>,
    #[arg(long)]
    retry_budget: Option<u32>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus with ground-truth categories.
    #[arg(long)]
    truth: PathBuf,
    /// Prediction file (id, predicted_label).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Run output directory containing predictions.csv.
    #[arg(long, value_name = "DIR")]
    run_dir: Option<PathBuf>,
    /// Label file, one label per line; defaults to the corpus label set.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Row name in the rendered table.
    #[arg(long, default_value = "predictions")]
    model_name: String,
    /// Where to write the machine-readable report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct HierarchyArgs {
    #[command(subcommand)]
    action: HierarchyAction,
}

#[derive(Subcommand)]
enum HierarchyAction {
    /// Check every hierarchy invariant; violations go to stderr.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Merge redundant self-named parent/child pairs and write the result.
    Prune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print topic, level, and root counts.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Render the hierarchy (structured JSON or DOT).
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dot")]
        format: ExportFormatArg,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExportFormatArg {
    Structured,
    Dot,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Operational(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file_config = config::load(cli.config.as_deref(), &cli.sets)?;
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(args, &file_config),
        Command::Run(args) => cmd_run(args, &file_config, false),
        Command::Record(args) => cmd_run(args, &file_config, true),
        Command::Eval(args) => cmd_eval(args),
        Command::Hierarchy(args) => cmd_hierarchy(args),
    }
}

fn load_corpus_checked(path: &Path) -> Result<Corpus, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "file not found: {}",
            path.display()
        )));
    }
    corpus::load_corpus(path, CorpusFormat::from_path(path))
        .map_err(|e| CliError::operational(format!("{}: {e}", path.display())))
}

fn preprocess_config(paths: &config::PathsSection) -> Result<PreprocessConfig, CliError> {
    match (&paths.contractions, &paths.stopwords, &paths.verb_lemmas) {
        (Some(contractions), Some(stopwords), Some(lemmas)) => {
            PreprocessConfig::from_files(contractions, stopwords, lemmas)
                .map_err(|e| CliError::usage(format!("bad lexicon: {e}")))
        }
        (None, None, None) => Ok(PreprocessConfig::bundled()),
        _ => Err(CliError::usage(
            "lexicon paths must be given together (contractions, stopwords, verb_lemmas)",
        )),
    }
}

fn cmd_preprocess(args: PreprocessArgs, file_config: &config::FileConfig) -> Result<(), CliError> {
    let mut corpus = load_corpus_checked(&args.input)?;
    let preprocess = preprocess_config(&file_config.paths)?;

    let mut before = std::collections::BTreeSet::new();
    for doc in corpus.documents() {
        before.extend(corpus::lowercase_token_set(&doc.description_raw));
    }
    corpus.preprocess_all(&preprocess);
    let mut after = std::collections::BTreeSet::new();
    for doc in corpus.documents() {
        if let Some(clean) = &doc.description_clean {
            after.extend(corpus::lowercase_token_set(clean));
        }
    }

    corpus::save_corpus(&corpus, &args.output, CorpusFormat::from_path(&args.output))
        .map_err(|e| CliError::operational(format!("writing {}: {e}", args.output.display())))?;
    println!(
        "preprocessed {} document(s); vocabulary {} -> {} distinct tokens",
        corpus.len(),
        before.len(),
        after.len()
    );
    Ok(())
}

fn build_gateway(
    backend: BackendArg,
    fixture: Option<&Path>,
    file_config: &config::FileConfig,
    record: bool,
) -> Result<Gateway, CliError> {
    let section = &file_config.backend;
    let provider: Box<dyn Provider> = match backend {
        BackendArg::Mock => Box::new(MockProvider::new(section.embed_dim, section.mock_seed)),
        BackendArg::Replay => {
            let path =
                fixture.ok_or_else(|| CliError::usage("replay backend requires --fixture"))?;
            if !path.exists() {
                return Err(CliError::usage(format!(
                    "fixture not found: {}",
                    path.display()
                )));
            }
            Box::new(
                ReplayProvider::load(path)
                    .map_err(|e| CliError::operational(format!("loading fixture: {e}")))?,
            )
        }
        BackendArg::Live => {
            let live_config = LiveConfig::from_env(
                section.base_url.clone(),
                section.chat_model.clone(),
                section.embed_model.clone(),
            )
            .map_err(|e| CliError::usage(format!("{e:?}")))?;
            Box::new(LiveProvider::new(LiveConfig {
                timeout: std::time::Duration::from_secs(section.timeout_secs),
                ..live_config
            }))
        }
    };

    let mut gateway = Gateway::new(
        provider,
        GatewayConfig {
            retry: RetryPolicy {
                budget: section.retry_budget,
                base_backoff: std::time::Duration::from_millis(section.backoff_ms),
            },
            concurrency_limit: section.concurrency,
        },
    );
    agents::install_defaults(&mut gateway);
    if let Some(dir) = &file_config.paths.templates_dir {
        gateway
            .templates_mut()
            .load_dir(dir)
            .map_err(|e| CliError::usage(format!("templates dir {}: {e}", dir.display())))?;
    }
    if record {
        let path = fixture.ok_or_else(|| CliError::usage("record requires --fixture"))?;
        gateway = gateway
            .record_to(path)
            .map_err(|e| CliError::operational(format!("opening fixture sink: {e}")))?;
    }
    Ok(gateway)
}

fn cmd_run(args: RunArgs, file_config: &config::FileConfig, record: bool) -> Result<(), CliError> {
    let corpus = load_corpus_checked(&args.input)?;

    let seeds = match (args.mode, &args.seeds, &file_config.paths.seeds) {
        (ModeArg::Seeded, Some(path), _) | (ModeArg::Seeded, None, Some(path)) => Some(
            SeedSet::from_file(path)
                .map_err(|e| CliError::usage(format!("seeds {}: {e}", path.display())))?,
        ),
        (ModeArg::Seeded, None, None) => {
            return Err(CliError::usage("seeded mode requires --seeds"))
        }
        (ModeArg::Generative, _, _) => None,
    };

    let backend = args
        .backend
        .unwrap_or(match file_config.backend.kind.as_str() {
            "live" => BackendArg::Live,
            "replay" => BackendArg::Replay,
            "mock" => BackendArg::Mock,
            other => return Err(CliError::usage(format!("unknown backend kind {other:?}"))),
        });
    if record && backend == BackendArg::Replay {
        return Err(CliError::usage("record requires a live or mock backend"));
    }
    let fixture = args
        .fixture
        .as_deref()
        .or(file_config.backend.fixture.as_deref());
    let gateway = build_gateway(backend, fixture, file_config, record)?;

    std::fs::create_dir_all(&args.output_dir)
        .map_err(|e| CliError::operational(format!("creating output dir: {e}")))?;

    let workflow_section = &file_config.workflow;
    let mut workflow = match seeds {
        Some(seeds) => WorkflowConfig::seeded(seeds),
        None => WorkflowConfig::generative(),
    };
    workflow.refinement_iterations = args
        .refinement_iterations
        .unwrap_or(workflow_section.refinement_iterations);
    workflow.review_retry_budget = args
        .retry_budget
        .unwrap_or(workflow_section.review_retry_budget);
    workflow.max_depth = args.max_depth.unwrap_or(workflow_section.max_depth);
    workflow.concurrency_limit = args.concurrency.unwrap_or(file_config.backend.concurrency);
    workflow.relevance_review = workflow_section.relevance_review;
    workflow.merge_threshold = workflow_section.merge_threshold;
    workflow.checkpoint_every = workflow_section.checkpoint_every;
    let mode = workflow.mode;

    let orchestrator = Orchestrator::new(&gateway, workflow)
        .map_err(|e| CliError::usage(e.to_string()))?
        .with_checkpoint(args.output_dir.join("checkpoint.json"));
    let result = orchestrator
        .run(&corpus)
        .map_err(|e| CliError::operational(format!("run aborted: {e}")))?;

    let augmented_name = match CorpusFormat::from_path(&args.input) {
        CorpusFormat::Csv => "augmented.csv",
        CorpusFormat::Jsonl => "augmented.jsonl",
    };
    let out = |name: &str| args.output_dir.join(name);
    orchestrator::augment(
        &corpus,
        &result,
        result.groups.as_deref(),
        &out(augmented_name),
        CorpusFormat::from_path(&args.input),
    )
    .map_err(|e| CliError::operational(format!("writing augmented dataset: {e}")))?;
    result
        .write_trace(&out("trace.log"))
        .map_err(|e| CliError::operational(format!("writing trace: {e}")))?;
    std::fs::write(out("run_result.json"), result.to_canonical_json())
        .map_err(|e| CliError::operational(format!("writing run result: {e}")))?;
    orchestrator
        .store_snapshot()
        .save(&out("vectors.store"))
        .map_err(|e| CliError::operational(format!("writing vector store: {e}")))?;

    if mode == Mode::Seeded {
        evalkit::write_predictions(&result, &corpus, &out("predictions.csv"), CorpusFormat::Csv)
            .map_err(|e| CliError::operational(format!("writing predictions: {e}")))?;
    }
    if let Some(h) = &result.hierarchy {
        let structured = hierarchy::export(h, ExportFormat::Structured)
            .map_err(|e| CliError::operational(format!("exporting hierarchy: {e}")))?;
        std::fs::write(out("hierarchy.structured.json"), structured)
            .map_err(|e| CliError::operational(e.to_string()))?;
        let dot = hierarchy::export(h, ExportFormat::Dot)
            .map_err(|e| CliError::operational(format!("exporting hierarchy: {e}")))?;
        std::fs::write(out("hierarchy.dot"), dot)
            .map_err(|e| CliError::operational(e.to_string()))?;
    }

    println!(
        "run complete: {} assigned, {} quarantined, {} provider call(s); outputs in {}",
        result.assignments.len(),
        result.quarantine.len(),
        gateway.provider_call_count(),
        args.output_dir.display()
    );
    Ok(())
}

fn read_labels(args: &EvalArgs, corpus: &Corpus) -> Result<Vec<String>, CliError> {
    match &args.labels {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("labels {}: {e}", path.display())))?;
            let labels: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            if labels.is_empty() {
                return Err(CliError::usage("label file is empty"));
            }
            Ok(labels)
        }
        None => {
            let labels: Vec<String> = corpus.label_set().into_iter().collect();
            if labels.is_empty() {
                return Err(CliError::usage("corpus has no categories; supply --labels"));
            }
            Ok(labels)
        }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let corpus = load_corpus_checked(&args.truth)?;
    let labels = read_labels(&args, &corpus)?;

    let predictions_path = match (&args.predictions, &args.run_dir) {
        (Some(path), _) => path.clone(),
        (None, Some(dir)) => dir.join("predictions.csv"),
        (None, None) => return Err(CliError::usage("eval requires --predictions or --run-dir")),
    };
    if !predictions_path.exists() {
        return Err(CliError::usage(format!(
            "file not found: {}",
            predictions_path.display()
        )));
    }
    let predictions = evalkit::read_predictions(
        &predictions_path,
        CorpusFormat::from_path(&predictions_path),
    )
    .map_err(|e| CliError::operational(format!("{}: {e}", predictions_path.display())))?;

    let corpus_ids: std::collections::BTreeSet<&str> =
        corpus.documents().iter().map(|d| d.id.as_str()).collect();
    let missing: Vec<&str> = corpus_ids
        .iter()
        .filter(|id| !predictions.contains_key(**id))
        .copied()
        .collect();
    let extra: Vec<&String> = predictions
        .keys()
        .filter(|id| !corpus_ids.contains(id.as_str()))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing predictions for: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            let extras: Vec<&str> = extra.iter().map(|s| s.as_str()).collect();
            parts.push(format!(
                "predictions for unknown ids: {}",
                extras.join(", ")
            ));
        }
        return Err(CliError::operational(format!(
            "id mismatch: {}",
            parts.join("; ")
        )));
    }

    let canonical = |name: &str| -> Option<String> {
        let folded = name.trim().to_lowercase();
        labels.iter().find(|l| l.to_lowercase() == folded).cloned()
    };
    let mut truth = Vec::with_capacity(corpus.len());
    let mut pred = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let category = doc.category.as_deref().ok_or_else(|| {
            CliError::operational(format!("document {} has no ground-truth category", doc.id))
        })?;
        truth.push(canonical(category).ok_or_else(|| {
            CliError::operational(format!("truth label not in label set: {category}"))
        })?);
        let raw = &predictions[&doc.id];
        if raw == UNRESOLVED_LABEL {
            pred.push(raw.clone());
        } else {
            pred.push(canonical(raw).ok_or_else(|| {
                CliError::operational(format!("prediction label not in label set: {raw}"))
            })?);
        }
    }

    let matrix = evalkit::confusion(&truth, &pred, &labels)
        .map_err(|e| CliError::operational(e.to_string()))?;
    let report =
        evalkit::macro_metrics(&matrix).map_err(|e| CliError::operational(e.to_string()))?;
    let table = evalkit::render_table(&[(args.model_name.clone(), report.clone())], &labels)
        .map_err(|e| CliError::operational(e.to_string()))?;
    print!("{table}");
    println!(
        "macro precision {:.4}  macro recall {:.4}  macro F1 {:.4}",
        report.macro_precision, report.macro_recall, report.macro_f1
    );

    let report_path = args.report.clone().unwrap_or_else(|| {
        args.run_dir
            .clone()
            .map(|d| d.join("report.json"))
            .unwrap_or_else(|| predictions_path.with_extension("report.json"))
    });
    write_report(&report_path, &report)?;
    println!("report written to {}", report_path.display());
    Ok(())
}

fn write_report(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json + "\n")
        .map_err(|e| CliError::operational(format!("writing report {}: {e}", path.display())))
}

fn read_hierarchy_file(path: &Path, lenient: bool) -> Result<hierarchy::TopicHierarchy, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "file not found: {}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::operational(format!("{}: {e}", path.display())))?;
    let result = if lenient {
        hierarchy::import_lenient(&text)
    } else {
        hierarchy::import(&text)
    };
    result.map_err(|e| CliError::operational(format!("{}: {e}", path.display())))
}

fn cmd_hierarchy(args: HierarchyArgs) -> Result<(), CliError> {
    match args.action {
        HierarchyAction::Validate { input } => {
            let hierarchy = read_hierarchy_file(&input, true)?;
            let violations = hierarchy::validate(&hierarchy);
            if violations.is_empty() {
                println!("valid");
                Ok(())
            } else {
                for violation in &violations {
                    eprintln!("{violation}");
                }
                Err(CliError::operational(format!(
                    "{} violation(s)",
                    violations.len()
                )))
            }
        }
        HierarchyAction::Prune { input, output } => {
            let hierarchy = read_hierarchy_file(&input, true)?;
            let (pruned, notes) = hierarchy::prune_redundant(&hierarchy);
            for note in &notes {
                println!("{note}");
            }
            let text = hierarchy::export(&pruned, ExportFormat::Structured)
                .map_err(|e| CliError::operational(e.to_string()))?;
            std::fs::write(&output, text)
                .map_err(|e| CliError::operational(format!("writing {}: {e}", output.display())))?;
            println!("pruned hierarchy written to {}", output.display());
            Ok(())
        }
        HierarchyAction::Stats { input } => {
            let hierarchy = read_hierarchy_file(&input, false)?;
            let stats =
                hierarchy::stats(&hierarchy).map_err(|e| CliError::operational(e.to_string()))?;
            println!("topics: {}", stats.topic_count);
            println!("levels: {}", stats.level_count);
            println!("roots: {}", stats.root_count);
            for (root, branches) in &stats.branch_counts {
                println!("branches under {root}: {branches}");
            }
            Ok(())
        }
        HierarchyAction::Export {
            input,
            output,
            format,
        } => {
            let hierarchy = read_hierarchy_file(&input, false)?;
            let rendered = hierarchy::export(
                &hierarchy,
                match format {
                    ExportFormatArg::Structured => ExportFormat::Structured,
                    ExportFormatArg::Dot => ExportFormat::Dot,
                },
            )
            .map_err(|e| CliError::operational(e.to_string()))?;
            match output {
                Some(path) => std::fs::write(&path, rendered).map_err(|e| {
                    CliError::operational(format!("writing {}: {e}", path.display()))
                })?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
    }
}
