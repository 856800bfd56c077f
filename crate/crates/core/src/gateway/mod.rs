//! Uniform interface to a chat-completion and embedding provider.
//!
//! A [`Gateway`] owns a prompt-template registry, a reply-schema registry,
//! and a pluggable [`Provider`] backend: live HTTP, deterministic
//! record/replay from a fixture file, or a mock that needs no network.
//! Every chat call is keyed by a canonical digest of
//! `(template_id, sorted variables, schema_id)` so recorded sessions replay
//! independently of call order; embeddings are keyed by their input text.
//!
//! Replies are parsed as structured output: the first well-formed fenced
//! data block is extracted and checked against the named reply schema, and
//! violations are reported as format errors rather than hard failures so
//! review agents can feed them back for correction.

mod provider;
mod replay;
mod schema;
mod template;

pub mod live;
pub mod mock;
pub mod scripted;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use provider::{ChatCall, Provider, ProviderError};
pub use replay::{Recorder, ReplayProvider};
pub use schema::{extract_structured, ReplySchema, SchemaRegistry, ValueSpec};
pub use template::TemplateRegistry;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s): {message}")]
    RateLimited { attempts: u32, message: String },
    #[error("no fixture entry for digest {digest}")]
    FixtureMiss { digest: String },
    #[error("empty input text for embedding")]
    EmptyInput,
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("unknown response schema: {0}")]
    UnknownSchema(String),
    #[error("template {template_id}: placeholder {{{{{placeholder}}}}} has no binding")]
    MissingBinding {
        template_id: String,
        placeholder: String,
    },
    #[error("embedding dimension changed from {expected} to {actual}")]
    DimensionDrift { expected: usize, actual: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("corrupt fixture {path} at line {line}: {reason}")]
    CorruptFixture {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A chat-completion request: a template id, its placeholder bindings, and
/// the id of the reply schema the output must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template_id: String,
    pub variables: BTreeMap<String, String>,
    pub response_schema_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl PromptRequest {
    pub fn new(template_id: impl Into<String>, schema_id: impl Into<String>) -> Self {
        PromptRequest {
            template_id: template_id.into(),
            variables: BTreeMap::new(),
            response_schema_id: schema_id.into(),
            temperature: 0.0,
            max_output_tokens: 2048,
        }
    }

    pub fn var(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.variables.insert(name.into(), value.into());
        self
    }
}

/// Provider text plus the outcome of structured-output validation. Exactly
/// one of `parsed` / non-empty `format_errors` is populated.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredReply {
    pub raw_text: String,
    pub parsed: Option<serde_json::Value>,
    pub format_errors: Vec<String>,
}

impl StructuredReply {
    pub fn is_well_formed(&self) -> bool {
        self.parsed.is_some()
    }
}

/// Fixed-length embedding. All vectors produced by one gateway instance
/// share a dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Canonical request digest used as the record/replay key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RequestDigest(String);

impl RequestDigest {
    /// Digest of (template_id, sorted variables, schema_id). Independent of
    /// map iteration order and of rendering details.
    pub fn for_chat(request: &PromptRequest) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"chat\x00");
        hasher.update(request.template_id.as_bytes());
        hasher.update(b"\x00");
        hasher.update(request.response_schema_id.as_bytes());
        hasher.update(b"\x00");
        for (name, value) in &request.variables {
            hasher.update(name.as_bytes());
            hasher.update(b"\x1f");
            hasher.update(value.as_bytes());
            hasher.update(b"\x1e");
        }
        RequestDigest(hex::encode(hasher.finalize()))
    }

    /// Digest of an embedding input.
    pub fn for_embed(text: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"embed\x00");
        hasher.update(text.as_bytes());
        RequestDigest(hex::encode(hasher.finalize()))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for RequestDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Retry policy for transport-level failures. `budget` is the maximum number
/// of provider attempts per logical request; backoff doubles per attempt.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub budget: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            budget: 3,
            base_backoff: Duration::from_millis(200),
        }
    }
}

/// Gateway construction knobs.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub retry: RetryPolicy,
    /// Maximum in-flight provider requests, gateway-wide.
    pub concurrency_limit: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            retry: RetryPolicy::default(),
            concurrency_limit: 4,
        }
    }
}

/// Outcome metadata for one logical gateway call, surfaced so callers can
/// trace attempts.
#[derive(Debug, Clone, Copy)]
pub struct CallMeta {
    pub attempts: u32,
}

pub struct Gateway {
    templates: TemplateRegistry,
    schemas: SchemaRegistry,
    provider: Box<dyn Provider>,
    retry: RetryPolicy,
    limiter: Semaphore,
    recorder: Option<Recorder>,
    embed_dim: OnceLock<usize>,
    provider_calls: AtomicU64,
}

impl Gateway {
    pub fn new(provider: Box<dyn Provider>, config: GatewayConfig) -> Self {
        Gateway {
            templates: TemplateRegistry::new(),
            schemas: SchemaRegistry::new(),
            provider,
            retry: config.retry,
            limiter: Semaphore::new(config.concurrency_limit.max(1)),
            recorder: None,
            embed_dim: OnceLock::new(),
            provider_calls: AtomicU64::new(0),
        }
    }

    pub fn templates_mut(&mut self) -> &mut TemplateRegistry {
        &mut self.templates
    }

    pub fn schemas_mut(&mut self) -> &mut SchemaRegistry {
        &mut self.schemas
    }

    /// Tees every request/reply pair into a fixture file so the session can
    /// later be replayed without network access.
    pub fn record_to(mut self, sink: &Path) -> Result<Self, GatewayError> {
        self.recorder = Some(Recorder::create(sink)?);
        Ok(self)
    }

    /// Total provider attempts made so far (includes retries).
    pub fn provider_call_count(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    /// Renders the request's template, calls the backend (with transport
    /// retries), and validates the reply against the named schema. Schema
    /// violations come back as `format_errors` on the reply, not as `Err`.
    pub fn complete(&self, request: &PromptRequest) -> Result<StructuredReply, GatewayError> {
        let reply = self.complete_with_meta(request)?;
        Ok(reply.0)
    }

    pub fn complete_with_meta(
        &self,
        request: &PromptRequest,
    ) -> Result<(StructuredReply, CallMeta), GatewayError> {
        if !(0.0..=1.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                request.temperature
            )));
        }
        if request.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        let schema = self
            .schemas
            .get(&request.response_schema_id)
            .ok_or_else(|| GatewayError::UnknownSchema(request.response_schema_id.clone()))?;
        let prompt = self.templates.render(request)?;
        let digest = RequestDigest::for_chat(request);
        let call = ChatCall {
            digest: &digest,
            request,
            prompt: &prompt,
        };
        let (raw_text, meta) = self.with_retry(|| self.provider.chat(&call))?;
        if let Some(recorder) = &self.recorder {
            recorder.record_chat(&digest, request, &raw_text)?;
        }
        Ok((schema.parse_reply(raw_text), meta))
    }

    /// Embeds nonempty text. Identical text always yields an identical
    /// vector under the replay and mock backends.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let reply = self.embed_with_meta(text)?;
        Ok(reply.0)
    }

    pub fn embed_with_meta(&self, text: &str) -> Result<(EmbeddingVector, CallMeta), GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let digest = RequestDigest::for_embed(text);
        let (values, meta) = self.with_retry(|| self.provider.embed(&digest, text))?;
        let expected = *self.embed_dim.get_or_init(|| values.len());
        if values.len() != expected {
            return Err(GatewayError::DimensionDrift {
                expected,
                actual: values.len(),
            });
        }
        if let Some(recorder) = &self.recorder {
            recorder.record_embed(&digest, text, &values)?;
        }
        Ok((EmbeddingVector::new(values), meta))
    }

    fn with_retry<T>(
        &self,
        call: impl Fn() -> Result<T, ProviderError>,
    ) -> Result<(T, CallMeta), GatewayError> {
        let budget = self.retry.budget.max(1);
        let mut last: Option<ProviderError> = None;
        for attempt in 1..=budget {
            let _permit = self.limiter.acquire();
            self.provider_calls.fetch_add(1, Ordering::Relaxed);
            match call() {
                Ok(value) => return Ok((value, CallMeta { attempts: attempt })),
                Err(err @ (ProviderError::Transport(_) | ProviderError::RateLimited(_))) => {
                    last = Some(err);
                    if attempt < budget && !self.retry.base_backoff.is_zero() {
                        let backoff = self.retry.base_backoff * 2u32.saturating_pow(attempt - 1);
                        std::thread::sleep(backoff);
                    }
                }
                Err(ProviderError::FixtureMiss(digest)) => {
                    return Err(GatewayError::FixtureMiss { digest })
                }
                Err(ProviderError::Fatal(message)) => return Err(GatewayError::Provider(message)),
            }
        }
        Err(match last.expect("at least one attempt was made") {
            ProviderError::Transport(message) => GatewayError::Transport {
                attempts: budget,
                message,
            },
            ProviderError::RateLimited(message) => GatewayError::RateLimited {
                attempts: budget,
                message,
            },
            _ => unreachable!("non-retryable errors return early"),
        })
    }
}

/// Counting semaphore bounding in-flight provider requests.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

struct SemaphorePermit<'a> {
    semaphore: &'a Semaphore,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphorePermit<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock poisoned");
        while *permits == 0 {
            permits = self
                .available
                .wait(permits)
                .expect("semaphore lock poisoned");
        }
        *permits -= 1;
        SemaphorePermit { semaphore: self }
    }
}

impl Drop for SemaphorePermit<'_> {
    fn drop(&mut self) {
        let mut permits = self
            .semaphore
            .permits
            .lock()
            .expect("semaphore lock poisoned");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::scripted::ScriptedProvider;
    use super::*;
    use proptest::prelude::*;

    fn test_gateway(provider: ScriptedProvider) -> Gateway {
        let mut gateway = Gateway::new(
            Box::new(provider),
            GatewayConfig {
                retry: RetryPolicy {
                    budget: 3,
                    base_backoff: Duration::ZERO,
                },
                concurrency_limit: 2,
            },
        );
        gateway
            .templates_mut()
            .insert("greet", "Hello {{name}}, reply as JSON.");
        gateway.schemas_mut().insert(ReplySchema::new(
            "greeting",
            ValueSpec::object([("message", ValueSpec::nonempty_string())]),
        ));
        gateway
    }

    fn greet_request() -> PromptRequest {
        PromptRequest::new("greet", "greeting").var("name", "world")
    }

    #[test]
    fn digest_is_stable_under_variable_insertion_order() {
        let a = PromptRequest::new("t", "s").var("x", "1").var("y", "2");
        let b = PromptRequest::new("t", "s").var("y", "2").var("x", "1");
        assert_eq!(RequestDigest::for_chat(&a), RequestDigest::for_chat(&b));
        let c = PromptRequest::new("t", "s").var("x", "1").var("y", "3");
        assert_ne!(RequestDigest::for_chat(&a), RequestDigest::for_chat(&c));
    }

    #[test]
    fn complete_parses_well_formed_reply() {
        let provider =
            ScriptedProvider::new().with_default_chat("```json\n{\"message\": \"hi\"}\n```");
        let gateway = test_gateway(provider);
        let reply = gateway.complete(&greet_request()).unwrap();
        assert!(reply.is_well_formed());
        assert!(reply.format_errors.is_empty());
        assert_eq!(reply.parsed.unwrap()["message"], "hi");
    }

    #[test]
    fn missing_required_key_becomes_format_error() {
        let provider = ScriptedProvider::new().with_default_chat("{\"other\": 1}");
        let gateway = test_gateway(provider);
        let reply = gateway.complete(&greet_request()).unwrap();
        assert!(reply.parsed.is_none());
        assert_eq!(
            reply.format_errors,
            vec!["missing key: message".to_string()]
        );
    }

    #[test]
    fn unbound_placeholder_is_rejected() {
        let gateway = test_gateway(ScriptedProvider::new().with_default_chat("{}"));
        let request = PromptRequest::new("greet", "greeting");
        match gateway.complete(&request) {
            Err(GatewayError::MissingBinding { placeholder, .. }) => {
                assert_eq!(placeholder, "name")
            }
            other => panic!("expected MissingBinding, got {other:?}"),
        }
    }

    #[test]
    fn transport_failures_exhaust_retry_budget() {
        let provider = ScriptedProvider::new()
            .with_default_chat("{\"message\": \"hi\"}")
            .failing_first(99);
        let gateway = test_gateway(provider);
        match gateway.complete(&greet_request()) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected Transport, got {other:?}"),
        }
        assert_eq!(gateway.provider_call_count(), 3);
    }

    #[test]
    fn transient_failure_recovers_within_budget() {
        let provider = ScriptedProvider::new()
            .with_default_chat("{\"message\": \"hi\"}")
            .failing_first(2);
        let gateway = test_gateway(provider);
        let (reply, meta) = gateway.complete_with_meta(&greet_request()).unwrap();
        assert!(reply.is_well_formed());
        assert_eq!(meta.attempts, 3);
    }

    #[test]
    fn embed_rejects_empty_input() {
        let gateway = test_gateway(ScriptedProvider::new());
        assert!(matches!(gateway.embed("  "), Err(GatewayError::EmptyInput)));
    }

    #[test]
    fn out_of_range_request_fields_are_rejected() {
        let gateway = test_gateway(ScriptedProvider::new().with_default_chat("{}"));
        let mut request = greet_request();
        request.temperature = 1.5;
        assert!(matches!(
            gateway.complete(&request),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut request = greet_request();
        request.max_output_tokens = 0;
        assert!(matches!(
            gateway.complete(&request),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn embed_is_deterministic_per_text() {
        let gateway = test_gateway(ScriptedProvider::new());
        let a = gateway.embed("Business").unwrap();
        let b = gateway.embed("Business").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 64);
        let c = gateway.embed("Sport").unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        // Removing any required key from a valid reply must leave `parsed`
        // absent and report the missing key.
        #[test]
        fn schema_soundness_on_randomized_replies(
            present in proptest::collection::vec(any::<bool>(), 3),
            junk in "[ -~]{0,20}",
        ) {
            let keys = ["doc_id", "topics", "extra"];
            let mut object = serde_json::Map::new();
            for (key, keep) in keys.iter().zip(&present) {
                if *keep {
                    object.insert((*key).to_string(), serde_json::Value::String(junk.clone()));
                }
            }
            let raw = serde_json::Value::Object(object).to_string();

            let schema = ReplySchema::new(
                "probe",
                ValueSpec::object([
                    ("doc_id", ValueSpec::string()),
                    ("topics", ValueSpec::string()),
                ]),
            );
            let reply = schema.parse_reply(raw);
            let all_required_present = present[0] && present[1];
            prop_assert_eq!(reply.parsed.is_some(), all_required_present);
            prop_assert_eq!(reply.format_errors.is_empty(), all_required_present);
        }
    }
}
