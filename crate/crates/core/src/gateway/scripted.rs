//! Scripted backend for tests and fixture authoring: canned chat replies
//! selected by closure rules, hash-based embeddings, and optional injected
//! transport failures.

use std::sync::atomic::{AtomicU32, Ordering};

use super::mock::{hash_embedding, DEFAULT_EMBED_DIM};
use super::provider::{ChatCall, Provider, ProviderError};
use super::RequestDigest;

type ChatRule = Box<dyn Fn(&ChatCall<'_>) -> Option<Result<String, ProviderError>> + Send + Sync>;

#[derive(Default)]
pub struct ScriptedProvider {
    rules: Vec<ChatRule>,
    default_chat: Option<String>,
    fail_first: AtomicU32,
    chat_calls: AtomicU32,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a rule consulted in insertion order; the first rule returning
    /// `Some` answers the call.
    pub fn with_chat_rule(
        mut self,
        rule: impl Fn(&ChatCall<'_>) -> Option<Result<String, ProviderError>> + Send + Sync + 'static,
    ) -> Self {
        self.rules.push(Box::new(rule));
        self
    }

    /// Reply used when no rule matches.
    pub fn with_default_chat(mut self, text: impl Into<String>) -> Self {
        self.default_chat = Some(text.into());
        self
    }

    /// Makes the first `n` calls (chat and embed alike) fail with a
    /// transport error.
    pub fn failing_first(self, n: u32) -> Self {
        self.fail_first.store(n, Ordering::Relaxed);
        self
    }

    pub fn chat_call_count(&self) -> u32 {
        self.chat_calls.load(Ordering::Relaxed)
    }

    fn maybe_fail(&self) -> Result<(), ProviderError> {
        // Decrement-until-zero without underflow.
        let mut remaining = self.fail_first.load(Ordering::Relaxed);
        while remaining > 0 {
            match self.fail_first.compare_exchange(
                remaining,
                remaining - 1,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return Err(ProviderError::Transport("injected failure".into())),
                Err(actual) => remaining = actual,
            }
        }
        Ok(())
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError> {
        self.chat_calls.fetch_add(1, Ordering::Relaxed);
        self.maybe_fail()?;
        for rule in &self.rules {
            if let Some(reply) = rule(call) {
                return reply;
            }
        }
        self.default_chat.clone().ok_or_else(|| {
            ProviderError::Fatal(format!(
                "no scripted reply for template {}",
                call.request.template_id
            ))
        })
    }

    fn embed(&self, _digest: &RequestDigest, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.maybe_fail()?;
        Ok(hash_embedding(0, text, DEFAULT_EMBED_DIM))
    }
}
