//! Offline mock backend.
//!
//! Embeddings are deterministic vectors derived from a seeded hash of the
//! input text, so geometry-dependent code can be tested without fixtures.
//! Chat replies are rule-based: the mock inspects the request's schema id
//! and variables and produces a deterministic, schema-valid reply, which
//! makes full workflow runs (and fixture recording) possible with no
//! provider at all.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};

use super::provider::{ChatCall, Provider, ProviderError};
use super::RequestDigest;

pub const DEFAULT_EMBED_DIM: usize = 64;

pub struct MockProvider {
    dim: usize,
    seed: u64,
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider {
            dim: DEFAULT_EMBED_DIM,
            seed: 0,
        }
    }
}

impl MockProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockProvider { dim, seed }
    }
}

/// Deterministic embedding in [-1, 1): each component comes from a hash of
/// (seed, text, index). Identical text always maps to an identical vector.
pub fn hash_embedding(seed: u64, text: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let mut hasher = Sha256::new();
            hasher.update(seed.to_le_bytes());
            hasher.update((text.len() as u64).to_le_bytes());
            hasher.update(text.as_bytes());
            hasher.update((i as u64).to_le_bytes());
            let bytes = hasher.finalize();
            let raw = u64::from_le_bytes(bytes[..8].try_into().expect("sha256 yields 32 bytes"));
            (raw as f64 / u64::MAX as f64) * 2.0 - 1.0
        })
        .collect()
}

impl Provider for MockProvider {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError> {
        let vars = &call.request.variables;
        let reply = match call.request.response_schema_id.as_str() {
            "assignment" => mock_assignment(vars),
            "review" => json!({"ok": true, "errors": []}),
            "grouping" => mock_grouping(vars),
            "hierarchy" => mock_hierarchy(vars),
            other => {
                return Err(ProviderError::Fatal(format!(
                    "mock backend has no rule for schema {other}"
                )))
            }
        };
        Ok(format!("```json\n{reply}\n```"))
    }

    fn embed(&self, _digest: &RequestDigest, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(hash_embedding(self.seed, text, self.dim))
    }
}

fn var<'a>(vars: &'a BTreeMap<String, String>, name: &str) -> &'a str {
    vars.get(name).map(String::as_str).unwrap_or("")
}

fn mock_assignment(vars: &BTreeMap<String, String>) -> Value {
    let doc_id = var(vars, "doc_id");
    let title = var(vars, "title");
    let description = var(vars, "description");
    let seeds: Vec<String> = serde_json::from_str(var(vars, "seeds")).unwrap_or_default();

    let (name, explanation) = if seeds.is_empty() {
        generative_topic(title)
    } else {
        seeded_topic(&seeds, title, description)
    };
    json!({
        "doc_id": doc_id,
        "topics": [{"name": name, "explanation": explanation}],
    })
}

/// Seeded choice: the seed whose label occurs most often in the title and
/// description wins; ties and no-occurrence fall back to list order.
fn seeded_topic(seeds: &[String], title: &str, description: &str) -> (String, String) {
    let haystack = format!("{title} {description}").to_lowercase();
    let mut best = (0usize, 0usize); // (occurrences, index)
    for (i, seed) in seeds.iter().enumerate() {
        let needle = seed.to_lowercase();
        let count = if needle.is_empty() {
            0
        } else {
            haystack.matches(&needle).count()
        };
        if count > best.0 {
            best = (count, i);
        }
    }
    let seed = &seeds[best.1];
    let explanation = if best.0 > 0 {
        format!(
            "The text mentions \"{}\" {} time(s) across the title and description, so the article is assigned to that seeded label.",
            seed, best.0
        )
    } else {
        format!("No seeded label term appears in the text; defaulted to \"{seed}\".")
    };
    (seed.clone(), explanation)
}

fn generative_topic(title: &str) -> (String, String) {
    let word = title
        .split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphabetic()).collect::<String>())
        .find(|w| w.len() > 3)
        .unwrap_or_else(|| "General".to_string());
    let mut chars = word.chars();
    let name = match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => "General".to_string(),
    };
    let explanation = format!("The article titled \"{title}\" centers on {name}.");
    (name, explanation)
}

fn mock_grouping(vars: &BTreeMap<String, String>) -> Value {
    #[derive(serde::Deserialize)]
    struct Topic {
        name: String,
    }
    let topics: Vec<Topic> = serde_json::from_str(var(vars, "topics")).unwrap_or_default();
    let mut buckets: BTreeMap<char, Vec<String>> = BTreeMap::new();
    for topic in &topics {
        let initial = topic
            .name
            .chars()
            .next()
            .map(|c| c.to_ascii_uppercase())
            .unwrap_or('?');
        buckets.entry(initial).or_default().push(topic.name.clone());
    }
    let groups: Vec<Value> = buckets
        .into_iter()
        .map(|(initial, members)| {
            json!({
                "name": format!("Topics {initial}"),
                "description": format!("Thematic cluster covering {}.", members.join(", ")),
                "members": members,
            })
        })
        .collect();
    json!({ "groups": groups })
}

fn mock_hierarchy(vars: &BTreeMap<String, String>) -> Value {
    #[derive(serde::Deserialize)]
    struct Group {
        name: String,
        description: String,
        members: Vec<String>,
    }
    let groups: Vec<Group> = serde_json::from_str(var(vars, "groups")).unwrap_or_default();
    let mut nodes = vec![json!({
        "name": "All Topics",
        "description": "Root of the generated taxonomy.",
        "parent": null,
        "leaves": [],
    })];
    for group in &groups {
        nodes.push(json!({
            "name": group.name,
            "description": group.description,
            "parent": "All Topics",
            "leaves": group.members,
        }));
    }
    json!({ "nodes": nodes })
}
