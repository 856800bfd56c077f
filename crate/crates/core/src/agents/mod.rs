//! The five agent behaviors: topic identification, topic review, topic
//! grouping, group review, and hierarchy construction.
//!
//! Each agent is a prompt-driven operation with a validated structured
//! output. Structural checks (formatting, seed membership, coverage) run as
//! deterministic code; the LLM can only add relevance findings on top, never
//! suppress a structural violation. Malformed replies surface as outcomes the
//! caller feeds back through the fix-errors loop rather than hard failures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::gateway::{Gateway, GatewayError, PromptRequest, ReplySchema, ValueSpec};
use crate::hierarchy::{self, FlatNode, TopicHierarchy};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("reply for {doc_id} unparseable after {attempts} attempt(s): {}", errors.join("; "))]
    UnparseableReply {
        doc_id: String,
        attempts: u32,
        errors: Vec<String>,
    },
    #[error("hierarchy still invalid after {attempts} attempt(s): {}", violations.join("; "))]
    StructuralViolation {
        attempts: u32,
        violations: Vec<String>,
    },
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("duplicate seed label after case folding: {0}")]
    DuplicateSeed(String),
    #[error("seeded mode requires a seed set")]
    MissingSeeds,
    #[error("no topics to group")]
    NoTopics,
}

/// Workflow mode: seeded identification terminates after topic review;
/// generative identification continues into grouping and hierarchy
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Seeded,
    Generative,
}

/// One named topic with its natural-language justification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub explanation: String,
}

/// Per-document topic labels, each with an explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub doc_id: String,
    pub topics: Vec<Topic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFinding {
    pub doc_id: String,
    pub message: String,
}

/// Review outcome; `ok` holds exactly when `errors` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub ok: bool,
    pub errors: Vec<ReviewFinding>,
}

impl ReviewVerdict {
    pub fn from_errors(errors: Vec<ReviewFinding>) -> Self {
        ReviewVerdict {
            ok: errors.is_empty(),
            errors,
        }
    }

    pub fn messages(&self) -> Vec<String> {
        self.errors.iter().map(|e| e.message.clone()).collect()
    }
}

/// A named thematic group over topic names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicGroup {
    pub name: String,
    pub description: String,
    pub members: Vec<String>,
}

/// User-provided allowed labels for seeded identification. Labels are
/// distinct after case folding; matching is case-insensitive and
/// whitespace-trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct SeedSet {
    labels: Vec<String>,
}

impl SeedSet {
    pub fn new(labels: Vec<String>) -> Result<Self, AgentError> {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if labels.is_empty() {
            return Err(AgentError::EmptySeeds);
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.to_lowercase()) {
                return Err(AgentError::DuplicateSeed(label.clone()));
            }
        }
        Ok(SeedSet { labels })
    }

    /// One label per line; blank lines ignored.
    pub fn from_file(path: &std::path::Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(GatewayError::Io)?;
        Self::new(text.lines().map(str::to_string).collect())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Case-fold, whitespace-trimmed match; returns the canonical label.
    pub fn matches(&self, name: &str) -> Option<&str> {
        let folded = name.trim().to_lowercase();
        self.labels
            .iter()
            .find(|l| l.to_lowercase() == folded)
            .map(String::as_str)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.labels).expect("labels serialize")
    }
}

impl TryFrom<Vec<String>> for SeedSet {
    type Error = String;

    fn try_from(labels: Vec<String>) -> Result<Self, Self::Error> {
        SeedSet::new(labels).map_err(|e| e.to_string())
    }
}

impl From<SeedSet> for Vec<String> {
    fn from(seeds: SeedSet) -> Self {
        seeds.labels
    }
}

/// Installs the agent prompt templates and reply schemas into a gateway.
pub fn install_defaults(gateway: &mut Gateway) {
    let templates = gateway.templates_mut();
    templates.insert(
        "identify_seeded",
        include_str!("templates/identify_seeded.txt"),
    );
    templates.insert(
        "identify_generative",
        include_str!("templates/identify_generative.txt"),
    );
    templates.insert("review_topics", include_str!("templates/review_topics.txt"));
    templates.insert("group_topics", include_str!("templates/group_topics.txt"));
    templates.insert(
        "build_hierarchy",
        include_str!("templates/build_hierarchy.txt"),
    );

    let schemas = gateway.schemas_mut();
    schemas.insert(ReplySchema::new(
        "assignment",
        ValueSpec::object([
            ("doc_id", ValueSpec::string()),
            (
                "topics",
                ValueSpec::array_of(
                    ValueSpec::object([
                        ("name", ValueSpec::nonempty_string()),
                        ("explanation", ValueSpec::nonempty_string()),
                    ]),
                    1,
                ),
            ),
        ]),
    ));
    schemas.insert(ReplySchema::new(
        "review",
        ValueSpec::object([
            ("ok", ValueSpec::Bool),
            (
                "errors",
                ValueSpec::array_of(
                    ValueSpec::object([
                        ("doc_id", ValueSpec::string()),
                        ("message", ValueSpec::nonempty_string()),
                    ]),
                    0,
                ),
            ),
        ]),
    ));
    schemas.insert(ReplySchema::new(
        "grouping",
        ValueSpec::object([(
            "groups",
            ValueSpec::array_of(
                ValueSpec::object([
                    ("name", ValueSpec::nonempty_string()),
                    ("description", ValueSpec::nonempty_string()),
                    (
                        "members",
                        ValueSpec::array_of(ValueSpec::nonempty_string(), 1),
                    ),
                ]),
                1,
            ),
        )]),
    ));
    schemas.insert(ReplySchema::new(
        "hierarchy",
        ValueSpec::object([(
            "nodes",
            ValueSpec::array_of(
                ValueSpec::object([
                    ("name", ValueSpec::nonempty_string()),
                    ("description", ValueSpec::string()),
                    ("parent", ValueSpec::NullableStr),
                    (
                        "leaves",
                        ValueSpec::array_of(ValueSpec::nonempty_string(), 0),
                    ),
                ]),
                1,
            ),
        )]),
    ));
}

fn errors_json(errors: &[String]) -> String {
    serde_json::to_string(errors).expect("errors serialize")
}

/// A topic identification attempt: either a parsed assignment or the format
/// errors to feed back through the fix-errors loop.
#[derive(Debug, Clone)]
pub enum IdentifyOutcome {
    Assigned(TopicAssignment),
    Malformed(Vec<String>),
}

/// One identification call over the raw title and description. In seeded
/// mode the prompt carries the allowed labels; prior errors, when present,
/// are injected as correction context.
pub fn identify_topics(
    gateway: &Gateway,
    doc: &Document,
    mode: Mode,
    seeds: Option<&SeedSet>,
    prior_errors: &[String],
) -> Result<IdentifyOutcome, AgentError> {
    let template_id = match mode {
        Mode::Seeded => "identify_seeded",
        Mode::Generative => "identify_generative",
    };
    if mode == Mode::Seeded && seeds.is_none() {
        return Err(AgentError::MissingSeeds);
    }
    let mut request = PromptRequest::new(template_id, "assignment")
        .var("doc_id", &doc.id)
        .var("title", &doc.title)
        .var("description", &doc.description_raw)
        .var("prior_errors", errors_json(prior_errors));
    if let Some(seeds) = seeds {
        request = request.var("seeds", seeds.to_json());
    }
    let reply = gateway.complete(&request)?;
    let Some(parsed) = reply.parsed else {
        return Ok(IdentifyOutcome::Malformed(reply.format_errors));
    };
    let assignment: TopicAssignment = match serde_json::from_value(parsed) {
        Ok(assignment) => assignment,
        Err(e) => {
            return Ok(IdentifyOutcome::Malformed(vec![format!(
                "bad reply shape: {e}"
            )]))
        }
    };
    if assignment.doc_id != doc.id {
        return Ok(IdentifyOutcome::Malformed(vec![format!(
            "reply doc_id {:?} does not match document {:?}",
            assignment.doc_id, doc.id
        )]));
    }
    Ok(IdentifyOutcome::Assigned(assignment))
}

/// Deterministic structural review of an assignment: formatting violations
/// and, in seeded mode, seed membership and the one-label rule.
pub fn structural_review_topics(
    assignment: &TopicAssignment,
    mode: Mode,
    seeds: Option<&SeedSet>,
) -> ReviewVerdict {
    let mut errors = Vec::new();
    let mut add = |message: String| {
        errors.push(ReviewFinding {
            doc_id: assignment.doc_id.clone(),
            message,
        })
    };
    if assignment.topics.is_empty() {
        add("empty topic list".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for topic in &assignment.topics {
        if topic.name.trim().is_empty() {
            add("empty topic name".into());
        } else if !seen.insert(topic.name.trim().to_lowercase()) {
            add(format!("duplicate topic name: {}", topic.name));
        }
        if topic.explanation.trim().is_empty() {
            add(format!("empty explanation for topic: {}", topic.name));
        }
    }
    if mode == Mode::Seeded {
        if let Some(seeds) = seeds {
            for topic in &assignment.topics {
                if !topic.name.trim().is_empty() && seeds.matches(&topic.name).is_none() {
                    add(format!("label not in seed set: {}", topic.name));
                }
            }
            if assignment.topics.len() > 1 {
                add(format!(
                    "seeded assignment must carry exactly one label, found {}",
                    assignment.topics.len()
                ));
            }
        }
    }
    ReviewVerdict::from_errors(errors)
}

/// Full topic review: structural checks first, then (when a gateway is
/// supplied and the structure is clean) an LLM relevance pass whose findings
/// are added on top. A malformed relevance reply adds nothing.
pub fn review_topics(
    relevance_gateway: Option<&Gateway>,
    assignment: &TopicAssignment,
    mode: Mode,
    seeds: Option<&SeedSet>,
) -> Result<ReviewVerdict, AgentError> {
    let structural = structural_review_topics(assignment, mode, seeds);
    if !structural.ok {
        return Ok(structural);
    }
    let Some(gateway) = relevance_gateway else {
        return Ok(structural);
    };
    let request = PromptRequest::new("review_topics", "review")
        .var("doc_id", &assignment.doc_id)
        .var(
            "assignment",
            serde_json::to_string(assignment).expect("assignment serializes"),
        );
    let reply = gateway.complete(&request)?;
    let mut errors = structural.errors;
    if let Some(parsed) = reply.parsed {
        #[derive(Deserialize)]
        struct ReviewReply {
            ok: bool,
            errors: Vec<ReviewReplyError>,
        }
        #[derive(Deserialize)]
        struct ReviewReplyError {
            message: String,
        }
        if let Ok(review) = serde_json::from_value::<ReviewReply>(parsed) {
            if !review.ok {
                for finding in review.errors {
                    errors.push(ReviewFinding {
                        doc_id: assignment.doc_id.clone(),
                        message: format!("relevance: {}", finding.message),
                    });
                }
            }
        }
    }
    Ok(ReviewVerdict::from_errors(errors))
}

/// A grouping attempt: parsed groups or format errors for the loop.
#[derive(Debug, Clone)]
pub enum GroupOutcome {
    Grouped(Vec<TopicGroup>),
    Malformed(Vec<String>),
}

fn hierarchy_nodes_json(hierarchy: Option<&TopicHierarchy>) -> String {
    #[derive(Serialize)]
    struct NodeSummary<'a> {
        name: &'a str,
        description: &'a str,
    }
    fn collect<'a>(node: &'a hierarchy::HierarchyNode, out: &mut Vec<NodeSummary<'a>>) {
        out.push(NodeSummary {
            name: &node.name,
            description: &node.description,
        });
        for child in &node.children {
            collect(child, out);
        }
    }
    let mut nodes = Vec::new();
    if let Some(h) = hierarchy {
        for root in &h.roots {
            collect(root, &mut nodes);
        }
    }
    serde_json::to_string(&nodes).expect("node summaries serialize")
}

/// One grouping call over the deduplicated topic set. A prior hierarchy,
/// when supplied, seeds the prompt with the previous iteration's groups.
pub fn group_topics(
    gateway: &Gateway,
    topics: &[Topic],
    prior_hierarchy: Option<&TopicHierarchy>,
    prior_errors: &[String],
) -> Result<GroupOutcome, AgentError> {
    if topics.is_empty() {
        return Err(AgentError::NoTopics);
    }
    let request = PromptRequest::new("group_topics", "grouping")
        .var(
            "topics",
            serde_json::to_string(topics).expect("topics serialize"),
        )
        .var("prior_hierarchy", hierarchy_nodes_json(prior_hierarchy))
        .var("prior_errors", errors_json(prior_errors));
    let reply = gateway.complete(&request)?;
    let Some(parsed) = reply.parsed else {
        return Ok(GroupOutcome::Malformed(reply.format_errors));
    };
    #[derive(Deserialize)]
    struct GroupingReply {
        groups: Vec<TopicGroup>,
    }
    match serde_json::from_value::<GroupingReply>(parsed) {
        Ok(reply) => Ok(GroupOutcome::Grouped(reply.groups)),
        Err(e) => Ok(GroupOutcome::Malformed(vec![format!(
            "bad reply shape: {e}"
        )])),
    }
}

/// Structural group review: coverage (no missing topics), membership
/// validity, distinct members, and nonempty names/descriptions.
pub fn review_groups(groups: &[TopicGroup], topics: &[String]) -> ReviewVerdict {
    let mut errors = Vec::new();
    let mut add = |message: String| {
        errors.push(ReviewFinding {
            doc_id: "-".into(),
            message,
        })
    };
    if groups.is_empty() {
        add("no groups proposed".into());
    }
    let topic_set: std::collections::BTreeSet<String> =
        topics.iter().map(|t| t.trim().to_lowercase()).collect();
    let mut covered = std::collections::BTreeSet::new();
    for group in groups {
        if group.name.trim().is_empty() {
            add("empty group name".into());
        }
        if group.description.trim().is_empty() {
            add(format!("empty group description for: {}", group.name));
        }
        let mut seen = std::collections::BTreeSet::new();
        for member in &group.members {
            let folded = member.trim().to_lowercase();
            if !topic_set.contains(&folded) {
                add(format!("unknown member: {member}"));
            } else {
                covered.insert(folded.clone());
            }
            if !seen.insert(folded) {
                add(format!(
                    "duplicate member: {member} in group {}",
                    group.name
                ));
            }
        }
    }
    for topic in topics {
        if !covered.contains(&topic.trim().to_lowercase()) {
            add(format!("missing topic: {topic}"));
        }
    }
    ReviewVerdict::from_errors(errors)
}

/// Builds a hierarchy over the reviewed groups, repairing structurally
/// invalid replies through the fix-errors loop. Returns the validated
/// hierarchy and the number of attempts spent (at most 1 + retry budget).
pub fn build_hierarchy(
    gateway: &Gateway,
    groups: &[TopicGroup],
    prior: Option<&TopicHierarchy>,
    max_depth: u32,
    retry_budget: u32,
) -> Result<(TopicHierarchy, u32), AgentError> {
    let expected_leaves: std::collections::BTreeSet<String> = groups
        .iter()
        .flat_map(|g| g.members.iter())
        .cloned()
        .collect();
    let groups_json = serde_json::to_string(groups).expect("groups serialize");
    let mut prior_errors: Vec<String> = Vec::new();
    let max_attempts = 1 + retry_budget;
    for attempt in 1..=max_attempts {
        let request = PromptRequest::new("build_hierarchy", "hierarchy")
            .var("groups", &groups_json)
            .var("prior_hierarchy", hierarchy_nodes_json(prior))
            .var("max_depth", max_depth.to_string())
            .var("prior_errors", errors_json(&prior_errors));
        let reply = gateway.complete(&request)?;
        let Some(parsed) = reply.parsed else {
            prior_errors = reply.format_errors;
            continue;
        };
        #[derive(Deserialize)]
        struct HierarchyReply {
            nodes: Vec<FlatNode>,
        }
        let nodes = match serde_json::from_value::<HierarchyReply>(parsed) {
            Ok(reply) => reply.nodes,
            Err(e) => {
                prior_errors = vec![format!("bad reply shape: {e}")];
                continue;
            }
        };
        match check_hierarchy_reply(nodes, max_depth, &expected_leaves) {
            Ok(hierarchy) => return Ok((hierarchy, attempt)),
            Err(violations) => prior_errors = violations,
        }
    }
    Err(AgentError::StructuralViolation {
        attempts: max_attempts,
        violations: prior_errors,
    })
}

fn check_hierarchy_reply(
    nodes: Vec<FlatNode>,
    max_depth: u32,
    expected_leaves: &std::collections::BTreeSet<String>,
) -> Result<TopicHierarchy, Vec<String>> {
    let built = hierarchy::build_from_flat(nodes, max_depth)
        .map_err(|vs| vs.iter().map(|v| v.to_string()).collect::<Vec<_>>())?;
    let violations = hierarchy::validate(&built);
    if !violations.is_empty() {
        return Err(violations.iter().map(|v| v.to_string()).collect());
    }
    let leaves: std::collections::BTreeSet<String> =
        hierarchy::leaf_topics(&built).into_iter().collect();
    let mut problems = Vec::new();
    for missing in expected_leaves.difference(&leaves) {
        problems.push(format!("missing leaf topic: {missing}"));
    }
    for unexpected in leaves.difference(expected_leaves) {
        problems.push(format!("unexpected leaf topic: {unexpected}"));
    }
    if !problems.is_empty() {
        return Err(problems);
    }
    Ok(built)
}

#[cfg(test)]
mod tests;
