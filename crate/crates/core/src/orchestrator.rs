//! End-to-end workflow execution.
//!
//! Seeded runs: per-document identify→review fix-errors loops, terminating
//! at review. Generative runs continue through topic deduplication,
//! grouping (with its own review loop), hierarchy construction, a fixed
//! number of refinement iterations feeding the hierarchy back into
//! grouping, and a final redundancy prune.
//!
//! Per-document work runs concurrently up to the configured limit;
//! corpus-level stages are sequential. The trace is assembled in document
//! order regardless of completion order, so a run is a pure function of
//! (corpus, config, fixture): two runs produce byte-identical results.
//! Timestamps appear only in the trace file header.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    self, AgentError, GroupOutcome, IdentifyOutcome, Mode, SeedSet, Topic, TopicAssignment,
    TopicGroup,
};
use crate::corpus::{Corpus, CorpusError, CorpusFormat, Document};
use crate::gateway::{Gateway, GatewayError};
use crate::hierarchy::{self, TopicHierarchy};
use crate::vecstore::{ItemKind, StoredItem, VecStore, VecStoreError, DEFAULT_MERGE_THRESHOLD};

/// Label recorded for documents whose assignment never passed review.
pub const UNRESOLVED_LABEL: &str = "UNRESOLVED";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("structural violation in {stage}: {}", errors.join("; "))]
    StructuralViolation { stage: String, errors: Vec<String> },
    #[error("invalid workflow config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    VecStore(#[from] VecStoreError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkflowConfig {
    pub mode: Mode,
    pub seeds: Option<SeedSet>,
    /// Extra grouping+hierarchy passes after the first (so passes total
    /// 1 + refinement_iterations).
    pub refinement_iterations: u32,
    /// Correction round-trips allowed per fix-errors loop; a loop makes at
    /// most 1 + budget producer calls.
    pub review_retry_budget: u32,
    pub max_depth: u32,
    pub concurrency_limit: usize,
    /// Run the LLM relevance pass inside topic review.
    pub relevance_review: bool,
    /// Cosine threshold for flagging topic merge candidates.
    pub merge_threshold: f64,
    /// Write a mid-phase checkpoint every this many completed documents.
    pub checkpoint_every: usize,
}

impl WorkflowConfig {
    pub fn seeded(seeds: SeedSet) -> Self {
        WorkflowConfig {
            mode: Mode::Seeded,
            seeds: Some(seeds),
            ..Self::base()
        }
    }

    pub fn generative() -> Self {
        WorkflowConfig {
            mode: Mode::Generative,
            seeds: None,
            ..Self::base()
        }
    }

    fn base() -> Self {
        WorkflowConfig {
            mode: Mode::Generative,
            seeds: None,
            refinement_iterations: 1,
            review_retry_budget: 3,
            max_depth: hierarchy::DEFAULT_MAX_DEPTH,
            concurrency_limit: 4,
            relevance_review: true,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            checkpoint_every: 25,
        }
    }

    fn validate(&self) -> Result<(), OrchestratorError> {
        match (self.mode, &self.seeds) {
            (Mode::Seeded, None) => Err(OrchestratorError::InvalidConfig(
                "seeded mode requires seeds".into(),
            )),
            (Mode::Generative, Some(_)) => Err(OrchestratorError::InvalidConfig(
                "generative mode must not carry seeds".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// One trace record; `doc_id` is `-` for corpus-level stages. Sequence
/// numbers are assigned in canonical order, never wall-clock order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub stage: String,
    pub doc_id: String,
    pub detail: String,
}

/// Trace stages that correspond 1:1 with logical gateway calls (chat or
/// embed); used by the audit property that every call is traced.
pub const GATEWAY_CALL_STAGES: &[&str] = &[
    "identify",
    "review_llm",
    "grouping_attempt",
    "hierarchy_attempt",
    "embed",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedDoc {
    pub doc_id: String,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub assignments: Vec<TopicAssignment>,
    pub hierarchy: Option<TopicHierarchy>,
    pub groups: Option<Vec<TopicGroup>>,
    pub quarantine: Vec<QuarantinedDoc>,
    pub trace: Vec<TraceEntry>,
}

impl RunResult {
    pub fn assignment_for(&self, doc_id: &str) -> Option<&TopicAssignment> {
        self.assignments.iter().find(|a| a.doc_id == doc_id)
    }

    pub fn quarantined(&self, doc_id: &str) -> Option<&QuarantinedDoc> {
        self.quarantine.iter().find(|q| q.doc_id == doc_id)
    }

    /// Canonical serialization; byte-identical across replayed runs.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }

    /// Writes the trace as line-delimited records under a header line (the
    /// header is the only place a timestamp appears).
    pub fn write_trace(&self, path: &Path) -> std::io::Result<()> {
        use std::io::Write as _;
        let mut file = std::fs::File::create(path)?;
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(file, "# agentopic-trace v1 written_unix={started}")?;
        for entry in &self.trace {
            writeln!(
                file,
                "{}\t{}\t{}\t{}",
                entry.seq, entry.stage, entry.doc_id, entry.detail
            )?;
        }
        Ok(())
    }
}

/// Unsequenced trace line; sequence numbers are assigned when per-document
/// buffers are merged in corpus order.
#[derive(Debug, Clone)]
struct PendingEntry {
    stage: &'static str,
    doc_id: String,
    detail: String,
}

fn pending(stage: &'static str, doc_id: &str, detail: impl Into<String>) -> PendingEntry {
    PendingEntry {
        stage,
        doc_id: doc_id.to_string(),
        detail: detail.into(),
    }
}

/// Per-document worker slot: the outcome plus its local trace buffer.
type DocSlot = Mutex<Option<(DocOutcome, Vec<PendingEntry>)>>;

/// Identify-phase result: per-document outcomes in corpus order plus the
/// merged trace buffer.
type PhaseOutput = (Vec<(String, DocOutcome)>, Vec<PendingEntry>);

#[derive(Debug)]
enum DocOutcome {
    Assigned(TopicAssignment),
    Quarantined(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StoredOutcome {
    Assigned(TopicAssignment),
    Quarantined(Vec<String>),
}

/// Resumable state written after each stage (and periodically during the
/// per-document phase).
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    stage: String,
    outcomes: BTreeMap<String, StoredOutcome>,
}

const CHECKPOINT_VERSION: u32 = 1;

pub struct Orchestrator<'a> {
    gateway: &'a Gateway,
    config: WorkflowConfig,
    store: Mutex<VecStore>,
    checkpoint_path: Option<PathBuf>,
}

impl<'a> Orchestrator<'a> {
    pub fn new(gateway: &'a Gateway, config: WorkflowConfig) -> Result<Self, OrchestratorError> {
        config.validate()?;
        Ok(Orchestrator {
            gateway,
            config,
            store: Mutex::new(VecStore::new()),
            checkpoint_path: None,
        })
    }

    /// Enables checkpointing. If the file already exists, completed
    /// per-document outcomes are resumed from it.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint_path = Some(path.into());
        self
    }

    /// Snapshot of the embedding store (topics and groups upserted so far).
    pub fn store_snapshot(&self) -> VecStore {
        self.store.lock().expect("store lock poisoned").clone()
    }

    pub fn run(&self, corpus: &Corpus) -> Result<RunResult, OrchestratorError> {
        match self.config.mode {
            Mode::Seeded => self.run_seeded(corpus),
            Mode::Generative => self.run_generative(corpus),
        }
    }

    /// Seeded workflow: per-document identify→review loops; the workflow
    /// ends at review, so no hierarchy is produced.
    pub fn run_seeded(&self, corpus: &Corpus) -> Result<RunResult, OrchestratorError> {
        let (outcomes, mut trace) = self.identify_phase(corpus)?;
        let (assignments, quarantine) = split_outcomes(outcomes);
        trace.push(pending(
            "coverage",
            "-",
            format!(
                "{} assigned, {} quarantined of {} documents",
                assignments.len(),
                quarantine.len(),
                corpus.len()
            ),
        ));
        let result = RunResult {
            assignments,
            hierarchy: None,
            groups: None,
            quarantine,
            trace: sequence(trace),
        };
        self.write_checkpoint("seeded-complete", &result)?;
        Ok(result)
    }

    /// Generative workflow: identification, topic deduplication, then
    /// 1 + refinement_iterations passes of grouping (fix-errors loop) and
    /// hierarchy construction, with the hierarchy feeding back into
    /// grouping; finally redundancy pruning and validation.
    pub fn run_generative(&self, corpus: &Corpus) -> Result<RunResult, OrchestratorError> {
        let (outcomes, mut trace) = self.identify_phase(corpus)?;
        let (assignments, quarantine) = split_outcomes(outcomes);

        let topics = self.dedup_topics(&assignments, &mut trace);
        let mut groups: Option<Vec<TopicGroup>> = None;
        let mut current: Option<TopicHierarchy> = None;

        if !topics.is_empty() {
            self.upsert_canonical_topics(&topics, &mut trace)?;
            self.flag_merge_candidates(&mut trace)?;

            let passes = 1 + self.config.refinement_iterations;
            for pass in 1..=passes {
                let pass_groups =
                    self.grouping_pass(&topics, current.as_ref(), pass, &mut trace)?;
                self.upsert_groups(&pass_groups, &mut trace)?;
                let built =
                    self.hierarchy_pass(&pass_groups, current.as_ref(), pass, &mut trace)?;
                groups = Some(pass_groups);
                current = Some(built);
            }

            if let Some(built) = current.take() {
                let (pruned, notes) = hierarchy::prune_redundant(&built);
                for note in notes {
                    trace.push(pending("prune", "-", note));
                }
                let violations = hierarchy::validate(&pruned);
                if !violations.is_empty() {
                    return Err(OrchestratorError::StructuralViolation {
                        stage: "final hierarchy".into(),
                        errors: violations.iter().map(|v| v.to_string()).collect(),
                    });
                }
                current = Some(pruned);
            }
        } else {
            trace.push(pending(
                "grouping",
                "-",
                "skipped: no validated topics to group",
            ));
        }

        trace.push(pending(
            "coverage",
            "-",
            format!(
                "{} assigned, {} quarantined of {} documents",
                assignments.len(),
                quarantine.len(),
                corpus.len()
            ),
        ));
        let result = RunResult {
            assignments,
            hierarchy: current,
            groups,
            quarantine,
            trace: sequence(trace),
        };
        self.write_checkpoint("generative-complete", &result)?;
        Ok(result)
    }

    /// Concurrent per-document identify→review loops. Outcomes and trace
    /// buffers are merged in corpus order, so the result is independent of
    /// scheduling.
    fn identify_phase(&self, corpus: &Corpus) -> Result<PhaseOutput, OrchestratorError> {
        let documents = corpus.documents();
        let resumed = self.load_checkpoint()?;
        let resumed_count = resumed.len();

        let slots: Vec<DocSlot> = documents.iter().map(|_| Mutex::new(None)).collect();
        let next_index = AtomicUsize::new(0);
        let abort: Mutex<Option<OrchestratorError>> = Mutex::new(None);
        let completed = AtomicUsize::new(0);

        let workers = self
            .config
            .concurrency_limit
            .max(1)
            .min(documents.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next_index.fetch_add(1, Ordering::Relaxed);
                    if index >= documents.len() {
                        return;
                    }
                    if abort.lock().expect("abort lock poisoned").is_some() {
                        return;
                    }
                    let doc = &documents[index];
                    let mut entries = Vec::new();
                    if let Some(outcome) = resumed.get(&doc.id) {
                        entries.push(pending("resume", &doc.id, "restored from checkpoint"));
                        let restored = match outcome {
                            StoredOutcome::Assigned(a) => DocOutcome::Assigned(a.clone()),
                            StoredOutcome::Quarantined(e) => DocOutcome::Quarantined(e.clone()),
                        };
                        *slots[index].lock().expect("slot lock poisoned") =
                            Some((restored, entries));
                        continue;
                    }
                    match self.doc_loop(doc, &mut entries) {
                        Ok(outcome) => {
                            *slots[index].lock().expect("slot lock poisoned") =
                                Some((outcome, entries));
                            let done = completed.fetch_add(1, Ordering::Relaxed) + 1;
                            if self.config.checkpoint_every > 0
                                && done.is_multiple_of(self.config.checkpoint_every)
                            {
                                let _ = self.write_partial_checkpoint(&slots, documents);
                            }
                        }
                        Err(e) => {
                            abort.lock().expect("abort lock poisoned").get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });

        if let Some(error) = abort.into_inner().expect("abort lock poisoned") {
            return Err(error);
        }

        let mut outcomes = Vec::with_capacity(documents.len());
        let mut trace = Vec::new();
        if resumed_count > 0 {
            trace.push(pending(
                "resume",
                "-",
                format!("{resumed_count} document(s) restored from checkpoint"),
            ));
        }
        for (doc, slot) in documents.iter().zip(slots) {
            let (outcome, entries) = slot
                .into_inner()
                .expect("slot lock poisoned")
                .expect("every document slot is filled");
            trace.extend(entries);
            outcomes.push((doc.id.clone(), outcome));
        }
        self.write_outcome_checkpoint("identify-complete", &outcomes)?;
        Ok((outcomes, trace))
    }

    /// The identify→review fix-errors loop for one document: at most
    /// 1 + review_retry_budget identify calls, each retry carrying the
    /// previous errors as correction context.
    fn doc_loop(
        &self,
        doc: &Document,
        entries: &mut Vec<PendingEntry>,
    ) -> Result<DocOutcome, OrchestratorError> {
        let seeds = self.config.seeds.as_ref();
        let mut prior_errors: Vec<String> = Vec::new();
        let max_attempts = 1 + self.config.review_retry_budget;
        for attempt in 1..=max_attempts {
            entries.push(pending(
                "identify",
                &doc.id,
                format!("attempt {attempt} ({} prior error(s))", prior_errors.len()),
            ));
            let outcome =
                agents::identify_topics(self.gateway, doc, self.config.mode, seeds, &prior_errors)?;
            match outcome {
                IdentifyOutcome::Malformed(errors) => {
                    entries.push(pending(
                        "review",
                        &doc.id,
                        format!("attempt {attempt}: malformed reply: {}", errors.join("; ")),
                    ));
                    prior_errors = errors;
                }
                IdentifyOutcome::Assigned(assignment) => {
                    let relevance_gateway = self.config.relevance_review.then_some(self.gateway);
                    if relevance_gateway.is_some()
                        && agents::structural_review_topics(&assignment, self.config.mode, seeds).ok
                    {
                        entries.push(pending("review_llm", &doc.id, "relevance pass"));
                    }
                    let verdict = agents::review_topics(
                        relevance_gateway,
                        &assignment,
                        self.config.mode,
                        seeds,
                    )?;
                    if verdict.ok {
                        entries.push(pending("review", &doc.id, format!("attempt {attempt}: ok")));
                        self.upsert_assignment_topics(doc, &assignment, entries)?;
                        entries.push(pending(
                            "assign",
                            &doc.id,
                            assignment
                                .topics
                                .iter()
                                .map(|t| t.name.as_str())
                                .collect::<Vec<_>>()
                                .join("; "),
                        ));
                        return Ok(DocOutcome::Assigned(assignment));
                    }
                    let messages = verdict.messages();
                    entries.push(pending(
                        "review",
                        &doc.id,
                        format!("attempt {attempt}: {}", messages.join("; ")),
                    ));
                    prior_errors = messages;
                }
            }
        }
        entries.push(pending(
            "quarantine",
            &doc.id,
            format!("budget exhausted: {}", prior_errors.join("; ")),
        ));
        Ok(DocOutcome::Quarantined(prior_errors))
    }

    /// Embeds and stores each validated topic of one document, keyed by
    /// document and topic name.
    fn upsert_assignment_topics(
        &self,
        doc: &Document,
        assignment: &TopicAssignment,
        entries: &mut Vec<PendingEntry>,
    ) -> Result<(), OrchestratorError> {
        for topic in &assignment.topics {
            let text = format!("{}: {}", topic.name, topic.explanation);
            entries.push(pending("embed", &doc.id, format!("topic {}", topic.name)));
            let vector = self.gateway.embed(&text)?;
            let id = format!("doc-topic:{}:{}", doc.id, topic.name);
            self.store
                .lock()
                .expect("store lock poisoned")
                .upsert(StoredItem {
                    id: id.clone(),
                    kind: ItemKind::Topic,
                    text,
                    vector,
                })?;
            entries.push(pending("upsert", &doc.id, id));
        }
        Ok(())
    }

    /// Case-fold deduplication of validated topics, keeping the first-seen
    /// casing and explanation; alternates are recorded in the trace.
    fn dedup_topics(
        &self,
        assignments: &[TopicAssignment],
        trace: &mut Vec<PendingEntry>,
    ) -> Vec<Topic> {
        let mut order: Vec<Topic> = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for assignment in assignments {
            for topic in &assignment.topics {
                let key = topic.name.trim().to_lowercase();
                match seen.get(&key) {
                    None => {
                        seen.insert(key, 1);
                        order.push(topic.clone());
                    }
                    Some(&count) => {
                        seen.insert(key, count + 1);
                    }
                }
            }
        }
        for topic in &order {
            let count = seen[&topic.name.trim().to_lowercase()];
            if count > 1 {
                trace.push(pending(
                    "dedup",
                    "-",
                    format!(
                        "kept first explanation for {} ({} occurrence(s) merged)",
                        topic.name, count
                    ),
                ));
            }
        }
        trace.push(pending(
            "dedup",
            "-",
            format!("{} distinct topic(s) enter grouping", order.len()),
        ));
        order
    }

    /// Canonical one-item-per-topic embeddings used for merge-candidate
    /// detection and grouping support.
    fn upsert_canonical_topics(
        &self,
        topics: &[Topic],
        trace: &mut Vec<PendingEntry>,
    ) -> Result<(), OrchestratorError> {
        for topic in topics {
            let text = format!("{}: {}", topic.name, topic.explanation);
            trace.push(pending("embed", "-", format!("topic {}", topic.name)));
            let vector = self.gateway.embed(&text)?;
            let id = format!("topic:{}", topic.name);
            self.store
                .lock()
                .expect("store lock poisoned")
                .upsert(StoredItem {
                    id: id.clone(),
                    kind: ItemKind::Topic,
                    text,
                    vector,
                })?;
            trace.push(pending("upsert", "-", id));
        }
        Ok(())
    }

    /// Near-duplicate topic pairs over the canonical items, surfaced to the
    /// trace as merge candidates.
    fn flag_merge_candidates(
        &self,
        trace: &mut Vec<PendingEntry>,
    ) -> Result<(), OrchestratorError> {
        let store = self.store.lock().expect("store lock poisoned");
        let pairs = store.merge_candidates(self.config.merge_threshold)?;
        drop(store);
        for (a, b, score) in pairs {
            if a.starts_with("topic:") && b.starts_with("topic:") {
                trace.push(pending(
                    "merge_flags",
                    "-",
                    format!("merge candidates: {a} ~ {b} (cosine {score:.4})"),
                ));
            }
        }
        Ok(())
    }

    /// One grouping pass: group→review fix-errors loop bounded by the
    /// review retry budget.
    fn grouping_pass(
        &self,
        topics: &[Topic],
        prior: Option<&TopicHierarchy>,
        pass: u32,
        trace: &mut Vec<PendingEntry>,
    ) -> Result<Vec<TopicGroup>, OrchestratorError> {
        trace.push(pending("grouping_pass", "-", format!("pass {pass}")));
        let names: Vec<String> = topics.iter().map(|t| t.name.clone()).collect();
        let mut prior_errors: Vec<String> = Vec::new();
        let max_attempts = 1 + self.config.review_retry_budget;
        for attempt in 1..=max_attempts {
            trace.push(pending(
                "grouping_attempt",
                "-",
                format!("pass {pass} attempt {attempt}"),
            ));
            match agents::group_topics(self.gateway, topics, prior, &prior_errors)? {
                GroupOutcome::Malformed(errors) => {
                    trace.push(pending(
                        "review_groups",
                        "-",
                        format!("attempt {attempt}: malformed reply: {}", errors.join("; ")),
                    ));
                    prior_errors = errors;
                }
                GroupOutcome::Grouped(groups) => {
                    let verdict = agents::review_groups(&groups, &names);
                    if verdict.ok {
                        trace.push(pending(
                            "review_groups",
                            "-",
                            format!("attempt {attempt}: ok ({} group(s))", groups.len()),
                        ));
                        return Ok(groups);
                    }
                    let messages = verdict.messages();
                    trace.push(pending(
                        "review_groups",
                        "-",
                        format!("attempt {attempt}: {}", messages.join("; ")),
                    ));
                    prior_errors = messages;
                }
            }
        }
        Err(OrchestratorError::StructuralViolation {
            stage: format!("grouping pass {pass}"),
            errors: prior_errors,
        })
    }

    fn upsert_groups(
        &self,
        groups: &[TopicGroup],
        trace: &mut Vec<PendingEntry>,
    ) -> Result<(), OrchestratorError> {
        for group in groups {
            let text = format!("{}: {}", group.name, group.description);
            trace.push(pending("embed", "-", format!("group {}", group.name)));
            let vector = self.gateway.embed(&text)?;
            let id = format!("group:{}", group.name);
            self.store
                .lock()
                .expect("store lock poisoned")
                .upsert(StoredItem {
                    id: id.clone(),
                    kind: ItemKind::Group,
                    text,
                    vector,
                })?;
            trace.push(pending("upsert", "-", id));
        }
        Ok(())
    }

    fn hierarchy_pass(
        &self,
        groups: &[TopicGroup],
        prior: Option<&TopicHierarchy>,
        pass: u32,
        trace: &mut Vec<PendingEntry>,
    ) -> Result<TopicHierarchy, OrchestratorError> {
        trace.push(pending("hierarchy_pass", "-", format!("pass {pass}")));
        let (built, attempts) = agents::build_hierarchy(
            self.gateway,
            groups,
            prior,
            self.config.max_depth,
            self.config.review_retry_budget,
        )?;
        for attempt in 1..=attempts {
            let status = if attempt == attempts {
                "accepted"
            } else {
                "rejected"
            };
            trace.push(pending(
                "hierarchy_attempt",
                "-",
                format!("pass {pass} attempt {attempt}: {status}"),
            ));
        }
        Ok(built)
    }

    fn load_checkpoint(&self) -> Result<BTreeMap<String, StoredOutcome>, OrchestratorError> {
        let Some(path) = &self.checkpoint_path else {
            return Ok(BTreeMap::new());
        };
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let text = std::fs::read_to_string(path)?;
        let checkpoint: Checkpoint =
            serde_json::from_str(&text).map_err(|e| OrchestratorError::CorruptCheckpoint {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(OrchestratorError::CorruptCheckpoint {
                path: path.display().to_string(),
                reason: format!("unsupported version {}", checkpoint.version),
            });
        }
        Ok(checkpoint.outcomes)
    }

    fn write_partial_checkpoint(
        &self,
        slots: &[DocSlot],
        documents: &[Document],
    ) -> Result<(), OrchestratorError> {
        let mut outcomes = BTreeMap::new();
        for (doc, slot) in documents.iter().zip(slots) {
            if let Some((outcome, _)) = slot.lock().expect("slot lock poisoned").as_ref() {
                outcomes.insert(doc.id.clone(), store_outcome(outcome));
            }
        }
        self.persist_checkpoint("identify-partial", outcomes)
    }

    fn write_outcome_checkpoint(
        &self,
        stage: &str,
        outcomes: &[(String, DocOutcome)],
    ) -> Result<(), OrchestratorError> {
        let map = outcomes
            .iter()
            .map(|(id, outcome)| (id.clone(), store_outcome(outcome)))
            .collect();
        self.persist_checkpoint(stage, map)
    }

    fn write_checkpoint(&self, stage: &str, result: &RunResult) -> Result<(), OrchestratorError> {
        let mut outcomes = BTreeMap::new();
        for assignment in &result.assignments {
            outcomes.insert(
                assignment.doc_id.clone(),
                StoredOutcome::Assigned(assignment.clone()),
            );
        }
        for quarantined in &result.quarantine {
            outcomes.insert(
                quarantined.doc_id.clone(),
                StoredOutcome::Quarantined(quarantined.errors.clone()),
            );
        }
        self.persist_checkpoint(stage, outcomes)
    }

    fn persist_checkpoint(
        &self,
        stage: &str,
        outcomes: BTreeMap<String, StoredOutcome>,
    ) -> Result<(), OrchestratorError> {
        let Some(path) = &self.checkpoint_path else {
            return Ok(());
        };
        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            stage: stage.to_string(),
            outcomes,
        };
        let text = serde_json::to_string_pretty(&checkpoint).expect("checkpoint serializes");
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn store_outcome(outcome: &DocOutcome) -> StoredOutcome {
    match outcome {
        DocOutcome::Assigned(a) => StoredOutcome::Assigned(a.clone()),
        DocOutcome::Quarantined(e) => StoredOutcome::Quarantined(e.clone()),
    }
}

fn split_outcomes(
    outcomes: Vec<(String, DocOutcome)>,
) -> (Vec<TopicAssignment>, Vec<QuarantinedDoc>) {
    let mut assignments = Vec::new();
    let mut quarantine = Vec::new();
    for (doc_id, outcome) in outcomes {
        match outcome {
            DocOutcome::Assigned(assignment) => assignments.push(assignment),
            DocOutcome::Quarantined(errors) => quarantine.push(QuarantinedDoc { doc_id, errors }),
        }
    }
    (assignments, quarantine)
}

fn sequence(entries: Vec<PendingEntry>) -> Vec<TraceEntry> {
    entries
        .into_iter()
        .enumerate()
        .map(|(i, entry)| TraceEntry {
            seq: i as u64,
            stage: entry.stage.to_string(),
            doc_id: entry.doc_id,
            detail: entry.detail,
        })
        .collect()
}

/// Writes the corpus augmented with topics, explanations, and (when
/// available) the containing top-level group and its generated description.
/// Quarantined documents carry the UNRESOLVED label and their error list.
pub fn augment(
    corpus: &Corpus,
    result: &RunResult,
    groups: Option<&[TopicGroup]>,
    path: &Path,
    format: CorpusFormat,
) -> Result<(), OrchestratorError> {
    let group_of = |topic_name: &str| -> Option<&TopicGroup> {
        let folded = topic_name.trim().to_lowercase();
        groups?
            .iter()
            .find(|g| g.members.iter().any(|m| m.trim().to_lowercase() == folded))
    };

    let mut records: Vec<AugmentedRecord> = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let record = if let Some(assignment) = result.assignment_for(&doc.id) {
            let topics: Vec<&str> = assignment.topics.iter().map(|t| t.name.as_str()).collect();
            let explanations: Vec<&str> = assignment
                .topics
                .iter()
                .map(|t| t.explanation.as_str())
                .collect();
            let mut group_names: Vec<&str> = Vec::new();
            let mut group_descriptions: Vec<&str> = Vec::new();
            for topic in &assignment.topics {
                if let Some(group) = group_of(&topic.name) {
                    if !group_names.contains(&group.name.as_str()) {
                        group_names.push(&group.name);
                        group_descriptions.push(&group.description);
                    }
                }
            }
            AugmentedRecord {
                id: doc.id.clone(),
                title: doc.title.clone(),
                description: doc.description_raw.clone(),
                category: doc.category.clone().unwrap_or_default(),
                topics: topics.join("; "),
                explanations: explanations.join(" | "),
                group: group_names.join("; "),
                group_description: group_descriptions.join(" | "),
            }
        } else {
            let errors = result
                .quarantined(&doc.id)
                .map(|q| q.errors.join(" | "))
                .unwrap_or_default();
            AugmentedRecord {
                id: doc.id.clone(),
                title: doc.title.clone(),
                description: doc.description_raw.clone(),
                category: doc.category.clone().unwrap_or_default(),
                topics: UNRESOLVED_LABEL.to_string(),
                explanations: errors,
                group: String::new(),
                group_description: String::new(),
            }
        };
        records.push(record);
    }

    match format {
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)
                .map_err(|e| OrchestratorError::Io(std::io::Error::other(e.to_string())))?;
            writer
                .write_record([
                    "id",
                    "title",
                    "description",
                    "category",
                    "topics",
                    "explanations",
                    "group",
                    "group_description",
                ])
                .map_err(|e| OrchestratorError::Io(std::io::Error::other(e.to_string())))?;
            for record in &records {
                writer
                    .write_record([
                        &record.id,
                        &record.title,
                        &record.description,
                        &record.category,
                        &record.topics,
                        &record.explanations,
                        &record.group,
                        &record.group_description,
                    ])
                    .map_err(|e| OrchestratorError::Io(std::io::Error::other(e.to_string())))?;
            }
            writer
                .flush()
                .map_err(|e| OrchestratorError::Io(std::io::Error::other(e.to_string())))?;
        }
        CorpusFormat::Jsonl => {
            use std::io::Write as _;
            let mut file = std::fs::File::create(path)?;
            for record in &records {
                writeln!(
                    file,
                    "{}",
                    serde_json::to_string(record).expect("record serializes")
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AugmentedRecord {
    id: String,
    title: String,
    description: String,
    category: String,
    topics: String,
    explanations: String,
    group: String,
    group_description: String,
}
