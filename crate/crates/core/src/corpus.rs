//! Article corpus loading and the six-step text preprocessing pipeline.
//!
//! Titles are kept verbatim; only descriptions are preprocessed. The pipeline
//! applies, in order: contraction expansion, lowercasing, punctuation and
//! digit removal, whitespace collapse, stopword removal, and verb
//! lemmatization. All lexicons are bundled so the pipeline is hermetic and
//! deterministic; custom lexicon files can be supplied instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_CONTRACTIONS: &str = include_str!("../data/contractions.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const BUNDLED_VERB_LEMMAS: &str = include_str!("../data/verb_lemmas.tsv");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },
    #[error("duplicate document id: {0}")]
    DuplicateId(String),
    #[error("no documents in input")]
    EmptyFile,
    #[error("invalid lexicon {path}: {reason}")]
    InvalidLexicon { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// On-disk corpus encoding. CSV uses a header row (`id,title,description`
/// plus optional `category` and `description_clean` columns, RFC-4180
/// quoting); JSONL uses one object per line with the same keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    /// Guess the format from a file extension; defaults to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Csv,
        }
    }
}

/// One article. `title` is never preprocessed; `description_clean` is
/// populated by [`Corpus::preprocess_all`] and, when present, contains only
/// lowercase alphabetic tokens separated by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub description_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_clean: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// An ordered collection of documents with unique ids. Iteration order is
/// ingestion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and empty ids.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line: 0,
                    reason: "empty document id".into(),
                });
            }
            if !seen.insert(doc.id.clone()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Distinct ground-truth categories present in the corpus.
    pub fn label_set(&self) -> BTreeSet<String> {
        self.documents
            .iter()
            .filter_map(|d| d.category.clone())
            .collect()
    }

    /// Runs the preprocessing pipeline over every description.
    pub fn preprocess_all(&mut self, config: &PreprocessConfig) {
        for doc in &mut self.documents {
            doc.description_clean = Some(preprocess(&doc.description_raw, config));
        }
    }
}

/// Lexicons driving the pipeline: contraction expansions, stopwords, and
/// verb lemmas. All keys and stopwords are lowercase; the verb lexicon is
/// idempotent (no value maps onward to a different lemma) and no lemma is a
/// stopword, which together make the full pipeline a fixed point.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    contractions: BTreeMap<String, String>,
    stopwords: BTreeSet<String>,
    verb_lemmas: BTreeMap<String, String>,
}

impl PreprocessConfig {
    /// The lexicons shipped with the artifact.
    pub fn bundled() -> Self {
        let config = PreprocessConfig {
            contractions: parse_tsv_map(BUNDLED_CONTRACTIONS, "<bundled contractions>")
                .expect("bundled contraction lexicon is well-formed"),
            stopwords: parse_word_list(BUNDLED_STOPWORDS),
            verb_lemmas: parse_tsv_map(BUNDLED_VERB_LEMMAS, "<bundled verb lemmas>")
                .expect("bundled verb lexicon is well-formed"),
        };
        config
            .validate()
            .expect("bundled lexicons satisfy config invariants");
        config
    }

    /// Loads lexicons from files: tab-separated key/value lines for the maps,
    /// one word per line for stopwords.
    pub fn from_files(
        contractions: &Path,
        stopwords: &Path,
        verb_lemmas: &Path,
    ) -> Result<Self, CorpusError> {
        let read = |p: &Path| -> Result<String, CorpusError> {
            std::fs::read_to_string(p).map_err(CorpusError::Io)
        };
        let config = PreprocessConfig {
            contractions: parse_tsv_map(&read(contractions)?, &contractions.display().to_string())?,
            stopwords: parse_word_list(&read(stopwords)?),
            verb_lemmas: parse_tsv_map(&read(verb_lemmas)?, &verb_lemmas.display().to_string())?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn contractions(&self) -> &BTreeMap<String, String> {
        &self.contractions
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn verb_lemmas(&self) -> &BTreeMap<String, String> {
        &self.verb_lemmas
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidLexicon {
            path: "<config>".into(),
            reason,
        };
        for word in &self.stopwords {
            if *word != word.to_lowercase() {
                return Err(invalid(format!("stopword not lowercase: {word}")));
            }
        }
        for key in self.contractions.keys().chain(self.verb_lemmas.keys()) {
            if *key != key.to_lowercase() {
                return Err(invalid(format!("lexicon key not lowercase: {key}")));
            }
        }
        for (key, lemma) in &self.verb_lemmas {
            if let Some(next) = self.verb_lemmas.get(lemma) {
                if next != lemma {
                    return Err(invalid(format!(
                        "verb lexicon not idempotent: {key} -> {lemma} -> {next}"
                    )));
                }
            }
            if self.stopwords.contains(lemma) {
                return Err(invalid(format!(
                    "verb lemma is a stopword, breaking pipeline idempotence: {lemma}"
                )));
            }
        }
        Ok(())
    }
}

fn parse_tsv_map(text: &str, path: &str) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::InvalidLexicon {
                path: path.to_string(),
                reason: format!("line {}: expected tab-separated key/value", i + 1),
            })?;
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Expands every contracted token found in the lexicon. Matching is
/// case-insensitive over maximal runs of letters and apostrophes; a leading
/// capital on the token is carried onto the expansion, so `It's` becomes
/// `It is`. Curly apostrophes are treated like straight ones.
pub fn expand_contractions(text: &str, lexicon: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    for ch in text.chars() {
        if ch.is_alphabetic() || ch == '\'' || ch == '\u{2019}' {
            token.push(ch);
        } else {
            flush_token(&mut out, &mut token, lexicon);
            out.push(ch);
        }
    }
    flush_token(&mut out, &mut token, lexicon);
    out
}

fn flush_token(out: &mut String, token: &mut String, lexicon: &BTreeMap<String, String>) {
    if token.is_empty() {
        return;
    }
    let normalized = token.replace('\u{2019}', "'").to_lowercase();
    match lexicon.get(&normalized) {
        Some(expansion) => {
            let capitalize = token.chars().next().is_some_and(char::is_uppercase);
            if capitalize {
                let mut chars = expansion.chars();
                if let Some(first) = chars.next() {
                    out.extend(first.to_uppercase());
                    out.push_str(chars.as_str());
                }
            } else {
                out.push_str(expansion);
            }
        }
        None => out.push_str(token),
    }
    token.clear();
}

/// Replaces each lowercase token with its lemma when the verb lexicon knows
/// it; other tokens pass through. Length is preserved.
pub fn lemmatize_verbs(tokens: &[String], lexicon: &BTreeMap<String, String>) -> Vec<String> {
    tokens
        .iter()
        .map(|t| lexicon.get(t).cloned().unwrap_or_else(|| t.clone()))
        .collect()
}

/// The full six-step pipeline: contraction expansion, lowercasing,
/// punctuation and digit removal, whitespace collapse, stopword removal,
/// verb lemmatization. Output contains only lowercase ASCII-alphabetic
/// tokens separated by single spaces; may be empty.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> String {
    let expanded = expand_contractions(text, &config.contractions);
    let lowered = expanded.to_lowercase();
    // Anything outside ASCII letters and whitespace is stripped in one pass;
    // digits count as noise here.
    let cleaned: String = lowered
        .chars()
        .filter(|c| c.is_ascii_alphabetic() || c.is_whitespace())
        .collect();
    let tokens: Vec<String> = cleaned
        .split_whitespace()
        .filter(|t| !config.stopwords.contains(*t))
        .map(str::to_string)
        .collect();
    lemmatize_verbs(&tokens, &config.verb_lemmas).join(" ")
}

/// Distinct whitespace-separated tokens of the lowercased text. This is the
/// "lowercase only" vocabulary baseline that the full pipeline must not
/// exceed.
pub fn lowercase_token_set(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Loads a corpus, preserving record order. `category` and
/// `description_clean` are read when the column or key exists; empty CSV
/// cells map to absent.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    match format {
        CorpusFormat::Csv => load_csv(path),
        CorpusFormat::Jsonl => load_jsonl(path),
    }
}

fn load_csv(path: &Path) -> Result<Corpus, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_open_error)?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, title_col, desc_col) = match (column("id"), column("title"), column("description"))
    {
        (Some(i), Some(t), Some(d)) => (i, t, d),
        _ => {
            return Err(CorpusError::MalformedRecord {
                line: 1,
                reason: "header must contain id, title, description".into(),
            })
        }
    };
    let category_col = column("category");
    let clean_col = column("description_clean");

    let mut documents = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| CorpusError::MalformedRecord {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<String, CorpusError> {
            record
                .get(col)
                .map(str::to_string)
                .ok_or_else(|| CorpusError::MalformedRecord {
                    line,
                    reason: format!("missing column {col}"),
                })
        };
        let optional = |col: Option<usize>| -> Option<String> {
            col.and_then(|c| record.get(c))
                .filter(|v| !v.is_empty())
                .map(str::to_string)
        };
        let id = field(id_col)?;
        if id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line,
                reason: "empty id".into(),
            });
        }
        documents.push(Document {
            id,
            title: field(title_col)?,
            description_raw: field(desc_col)?,
            description_clean: optional(clean_col),
            category: optional(category_col),
        });
    }
    finish_load(documents)
}

fn csv_open_error(e: csv::Error) -> CorpusError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CorpusError::Io(io),
            _ => unreachable!(),
        },
        _ => CorpusError::MalformedRecord {
            line: 0,
            reason: e.to_string(),
        },
    }
}

fn load_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    let mut documents = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: (i + 1) as u64,
                reason: e.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: (i + 1) as u64,
                reason: "empty id".into(),
            });
        }
        documents.push(Document {
            id: record.id,
            title: record.title,
            description_raw: record.description,
            description_clean: record.description_clean,
            category: record.category,
        });
    }
    finish_load(documents)
}

fn finish_load(documents: Vec<Document>) -> Result<Corpus, CorpusError> {
    if documents.is_empty() {
        return Err(CorpusError::EmptyFile);
    }
    Corpus::from_documents(documents)
}

#[derive(Deserialize, Serialize)]
struct JsonlRecord {
    id: String,
    title: String,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description_clean: Option<String>,
}

impl From<&Document> for JsonlRecord {
    fn from(doc: &Document) -> Self {
        JsonlRecord {
            id: doc.id.clone(),
            title: doc.title.clone(),
            description: doc.description_raw.clone(),
            category: doc.category.clone(),
            description_clean: doc.description_clean.clone(),
        }
    }
}

/// Writes a corpus back out; `load_corpus` of the result reproduces the
/// input corpus exactly.
pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    match format {
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_path(path).map_err(csv_open_error)?;
            writer
                .write_record([
                    "id",
                    "title",
                    "description",
                    "category",
                    "description_clean",
                ])
                .map_err(csv_write_error)?;
            for doc in corpus.documents() {
                writer
                    .write_record([
                        doc.id.as_str(),
                        doc.title.as_str(),
                        doc.description_raw.as_str(),
                        doc.category.as_deref().unwrap_or(""),
                        doc.description_clean.as_deref().unwrap_or(""),
                    ])
                    .map_err(csv_write_error)?;
            }
            writer.flush()?;
        }
        CorpusFormat::Jsonl => {
            let mut file = File::create(path)?;
            for doc in corpus.documents() {
                let record = JsonlRecord::from(doc);
                let line = serde_json::to_string(&record).expect("document serializes");
                writeln!(file, "{line}")?;
            }
        }
    }
    Ok(())
}

fn csv_write_error(e: csv::Error) -> CorpusError {
    CorpusError::MalformedRecord {
        line: 0,
        reason: e.to_string(),
    }
}
