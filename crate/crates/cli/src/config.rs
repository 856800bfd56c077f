//! Config file handling: a TOML document whose every key can be overridden
//! with `--set section.key=value`, plus typed defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: BackendSection,
    pub workflow: WorkflowSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// live | replay | mock
    pub kind: String,
    pub base_url: String,
    pub chat_model: String,
    pub embed_model: String,
    pub retry_budget: u32,
    pub backoff_ms: u64,
    pub concurrency: usize,
    pub embed_dim: usize,
    pub mock_seed: u64,
    pub fixture: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: "mock".into(),
            base_url: "https://api.openai.com/v1".into(),
            chat_model: "gpt-4.1".into(),
            embed_model: "text-embedding-3-small".into(),
            retry_budget: 3,
            backoff_ms: 200,
            concurrency: 4,
            embed_dim: 64,
            mock_seed: 0,
            fixture: None,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowSection {
    pub refinement_iterations: u32,
    pub review_retry_budget: u32,
    pub max_depth: u32,
    pub relevance_review: bool,
    pub merge_threshold: f64,
    pub checkpoint_every: usize,
}

impl Default for WorkflowSection {
    fn default() -> Self {
        WorkflowSection {
            refinement_iterations: 1,
            review_retry_budget: 3,
            max_depth: 6,
            relevance_review: true,
            merge_threshold: 0.95,
            checkpoint_every: 25,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub templates_dir: Option<PathBuf>,
    pub contractions: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub verb_lemmas: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
}

/// Loads the config file (when given), applies `--set key=value` overrides
/// by dotted path, and deserializes with defaults for everything unset.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<FileConfig, CliError> {
    let mut value: toml::Value = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?
        }
        None => toml::Value::Table(toml::Table::new()),
    };
    for assignment in sets {
        apply_set(&mut value, assignment)?;
    }
    value
        .try_into()
        .map_err(|e| CliError::Usage(format!("bad config: {e}")))
}

fn apply_set(root: &mut toml::Value, assignment: &str) -> Result<(), CliError> {
    let (dotted, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let parsed = parse_scalar(raw.trim());
    let mut current = root;
    let segments: Vec<&str> = dotted.trim().split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let table = current
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set path {dotted:?} crosses a non-table")))?;
        if i + 1 == segments.len() {
            table.insert(segment.to_string(), parsed);
            return Ok(());
        }
        current = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(CliError::Usage(format!(
        "--set key is empty in {assignment:?}"
    )))
}

fn parse_scalar(raw: &str) -> toml::Value {
    // Reuse the TOML grammar by parsing a one-line document; fall back to a
    // plain string for unquoted text.
    if let Ok(table) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(value) = table.get("v") {
            return value.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let config = load(None, &[]).unwrap();
        assert_eq!(config.backend.kind, "mock");
        assert_eq!(config.workflow.review_retry_budget, 3);
    }

    #[test]
    fn set_overrides_typed_values() {
        let config = load(
            None,
            &[
                "backend.kind=replay".to_string(),
                "workflow.refinement_iterations=2".to_string(),
                "workflow.relevance_review=false".to_string(),
                "workflow.merge_threshold=0.9".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(config.backend.kind, "replay");
        assert_eq!(config.workflow.refinement_iterations, 2);
        assert!(!config.workflow.relevance_review);
        assert!((config.workflow.merge_threshold - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load(None, &["workflow.nonsense=1".to_string()]);
        assert!(matches!(err, Err(CliError::Usage(_))));
    }
}
