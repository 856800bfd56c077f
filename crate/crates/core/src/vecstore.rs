//! Embedding store with exact nearest-neighbor search.
//!
//! Holds topic and group embeddings and serves cosine-similarity queries.
//! Search is an exhaustive scan: at the scale this workflow produces (a few
//! thousand items) exactness is cheap and testable, so there is no
//! approximation anywhere.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::gateway::EmbeddingVector;

/// Cosine similarity at or above this marks two topics as merge candidates
/// for the review agents.
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.95;

const STORE_MAGIC: &str = "AGENTOPIC-VECSTORE";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VecStoreError {
    #[error("vector dimension {actual} does not match store dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("store is empty (for the requested kind)")]
    EmptyStore,
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Topic,
    Group,
}

impl ItemKind {
    fn as_str(self) -> &'static str {
        match self {
            ItemKind::Topic => "topic",
            ItemKind::Group => "group",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "topic" => Some(ItemKind::Topic),
            "group" => Some(ItemKind::Group),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredItem {
    pub id: String,
    pub kind: ItemKind,
    pub text: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHit {
    pub id: String,
    pub score: f64,
}

/// In-memory store keyed by item id; all vectors share one dimension, fixed
/// by the first insert.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct VecStore {
    items: BTreeMap<String, StoredItem>,
    dim: Option<usize>,
}

impl VecStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn get(&self, id: &str) -> Option<&StoredItem> {
        self.items.get(id)
    }

    /// Iterates in id order.
    pub fn items(&self) -> impl Iterator<Item = &StoredItem> {
        self.items.values()
    }

    /// Inserts or overwrites; returns whether the id was already present.
    pub fn upsert(&mut self, item: StoredItem) -> Result<bool, VecStoreError> {
        match self.dim {
            Some(expected) if expected != item.vector.dim() => {
                return Err(VecStoreError::DimensionMismatch {
                    expected,
                    actual: item.vector.dim(),
                })
            }
            Some(_) => {}
            None => self.dim = Some(item.vector.dim()),
        }
        Ok(self.items.insert(item.id.clone(), item).is_some())
    }

    /// Exact top-k by descending cosine similarity (ties broken by
    /// ascending id), optionally restricted to one item kind.
    pub fn nearest(
        &self,
        query: &EmbeddingVector,
        k: usize,
        kind: Option<ItemKind>,
    ) -> Result<Vec<SimilarityHit>, VecStoreError> {
        let mut hits = Vec::new();
        for item in self.items.values() {
            if kind.is_some_and(|want| want != item.kind) {
                continue;
            }
            hits.push(SimilarityHit {
                id: item.id.clone(),
                score: cosine(query, &item.vector)?,
            });
        }
        if hits.is_empty() {
            return Err(VecStoreError::EmptyStore);
        }
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("cosine scores are finite")
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Pairs of distinct topic items whose similarity is at or above the
    /// threshold, ordered by id pair. These are surfaced to the review
    /// agents as merge candidates.
    pub fn merge_candidates(
        &self,
        threshold: f64,
    ) -> Result<Vec<(String, String, f64)>, VecStoreError> {
        let topics: Vec<&StoredItem> = self
            .items
            .values()
            .filter(|i| i.kind == ItemKind::Topic)
            .collect();
        let mut pairs = Vec::new();
        for (i, a) in topics.iter().enumerate() {
            for b in &topics[i + 1..] {
                let score = cosine(&a.vector, &b.vector)?;
                if score >= threshold {
                    pairs.push((a.id.clone(), b.id.clone(), score));
                }
            }
        }
        Ok(pairs)
    }

    /// Writes the store as a versioned text file: a header line carrying
    /// magic, format version, and dimension, then one item per line with the
    /// vector encoded as hex-encoded IEEE-754 bits (lossless).
    pub fn save(&self, path: &Path) -> Result<(), VecStoreError> {
        let mut out = String::new();
        writeln!(
            out,
            "{STORE_MAGIC} v{STORE_VERSION} dim={}",
            self.dim.unwrap_or(0)
        )
        .expect("writing to string");
        for item in self.items.values() {
            let record = serde_json::json!({
                "id": item.id,
                "kind": item.kind.as_str(),
                "text": item.text,
                "vector": encode_vector(&item.vector),
            });
            writeln!(out, "{record}").expect("writing to string");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VecStoreError> {
        let content = std::fs::read_to_string(path)?;
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| VecStoreError::CorruptStore("missing header".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(STORE_MAGIC) {
            return Err(VecStoreError::CorruptStore("bad magic".into()));
        }
        if parts.next() != Some(&format!("v{STORE_VERSION}")) {
            return Err(VecStoreError::CorruptStore("unsupported version".into()));
        }
        let dim: usize = parts
            .next()
            .and_then(|p| p.strip_prefix("dim="))
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| VecStoreError::CorruptStore("missing dimension".into()))?;

        let mut store = VecStore::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let corrupt =
                |reason: String| VecStoreError::CorruptStore(format!("line {}: {reason}", i + 2));
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let field = |name: &str| -> Result<String, VecStoreError> {
                value[name]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| corrupt(format!("missing field {name}")))
            };
            let kind = ItemKind::parse(&field("kind")?)
                .ok_or_else(|| corrupt("unknown item kind".into()))?;
            let vector = decode_vector(field("vector")?).map_err(corrupt)?;
            if vector.dim() != dim {
                return Err(corrupt(format!(
                    "vector dimension {} does not match header dim={dim}",
                    vector.dim()
                )));
            }
            store.upsert(StoredItem {
                id: field("id")?,
                kind,
                text: field("text")?,
                vector,
            })?;
        }
        Ok(store)
    }
}

/// Standard cosine similarity, in [-1, 1] up to rounding.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, VecStoreError> {
    if a.dim() != b.dim() {
        return Err(VecStoreError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(VecStoreError::ZeroVector);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

fn encode_vector(vector: &EmbeddingVector) -> String {
    let mut out = String::with_capacity(vector.dim() * 17);
    for (i, value) in vector.values().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{:016x}", value.to_bits()).expect("writing to string");
    }
    out
}

fn decode_vector(encoded: String) -> Result<EmbeddingVector, String> {
    if encoded.is_empty() {
        return Ok(EmbeddingVector::new(Vec::new()));
    }
    encoded
        .split(' ')
        .map(|part| {
            u64::from_str_radix(part, 16)
                .map(f64::from_bits)
                .map_err(|e| format!("bad vector component {part:?}: {e}"))
        })
        .collect::<Result<Vec<f64>, String>>()
        .map(EmbeddingVector::new)
}
