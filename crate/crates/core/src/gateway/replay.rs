//! Record/replay fixtures: line-delimited records of (digest, request,
//! reply) that make a recorded session reproducible without network access.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::provider::{ChatCall, Provider, ProviderError};
use super::{GatewayError, PromptRequest, RequestDigest};

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    digest: String,
    call: FixtureCall,
    reply: FixtureReply,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FixtureCall {
    Chat { request: PromptRequest },
    Embed { text: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FixtureReply {
    Text(String),
    Vector(Vec<f64>),
}

/// Serves recorded replies by request digest. Lookups do not consume
/// entries, so identical requests always replay identically; on duplicate
/// digests the first recording wins.
pub struct ReplayProvider {
    chats: HashMap<String, String>,
    embeds: HashMap<String, Vec<f64>>,
}

impl ReplayProvider {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path)?;
        let mut chats = HashMap::new();
        let mut embeds = HashMap::new();
        let mut dim: Option<usize> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| GatewayError::CorruptFixture {
                path: path.display().to_string(),
                line: i + 1,
                reason,
            };
            let record: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            match record.reply {
                FixtureReply::Text(text) => {
                    chats.entry(record.digest).or_insert(text);
                }
                FixtureReply::Vector(vector) => {
                    match dim {
                        None => dim = Some(vector.len()),
                        Some(d) if d != vector.len() => {
                            return Err(corrupt(format!(
                                "embedding dimension {} conflicts with earlier {}",
                                vector.len(),
                                d
                            )))
                        }
                        Some(_) => {}
                    }
                    embeds.entry(record.digest).or_insert(vector);
                }
            }
        }
        Ok(ReplayProvider { chats, embeds })
    }

    pub fn chat_count(&self) -> usize {
        self.chats.len()
    }

    pub fn embed_count(&self) -> usize {
        self.embeds.len()
    }
}

impl Provider for ReplayProvider {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError> {
        self.chats
            .get(call.digest.as_hex())
            .cloned()
            .ok_or_else(|| ProviderError::FixtureMiss(call.digest.as_hex().to_string()))
    }

    fn embed(&self, digest: &RequestDigest, _text: &str) -> Result<Vec<f64>, ProviderError> {
        self.embeds
            .get(digest.as_hex())
            .cloned()
            .ok_or_else(|| ProviderError::FixtureMiss(digest.as_hex().to_string()))
    }
}

/// Appends request/reply pairs to a fixture file. Appends are serialized;
/// a digest already recorded in this session is skipped, which keeps
/// fixtures tidy when identical requests repeat.
pub struct Recorder {
    inner: Mutex<RecorderInner>,
}

struct RecorderInner {
    file: File,
    seen: HashSet<String>,
}

impl Recorder {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Recorder {
            inner: Mutex::new(RecorderInner {
                file,
                seen: HashSet::new(),
            }),
        })
    }

    pub fn record_chat(
        &self,
        digest: &RequestDigest,
        request: &PromptRequest,
        reply: &str,
    ) -> Result<(), GatewayError> {
        self.append(FixtureRecord {
            digest: digest.as_hex().to_string(),
            call: FixtureCall::Chat {
                request: request.clone(),
            },
            reply: FixtureReply::Text(reply.to_string()),
        })
    }

    pub fn record_embed(
        &self,
        digest: &RequestDigest,
        text: &str,
        vector: &[f64],
    ) -> Result<(), GatewayError> {
        self.append(FixtureRecord {
            digest: digest.as_hex().to_string(),
            call: FixtureCall::Embed {
                text: text.to_string(),
            },
            reply: FixtureReply::Vector(vector.to_vec()),
        })
    }

    fn append(&self, record: FixtureRecord) -> Result<(), GatewayError> {
        let mut inner = self.inner.lock().expect("recorder lock poisoned");
        if !inner.seen.insert(record.digest.clone()) {
            return Ok(());
        }
        let line = serde_json::to_string(&record).expect("fixture record serializes");
        writeln!(inner.file, "{line}")?;
        inner.file.flush()?;
        Ok(())
    }
}
