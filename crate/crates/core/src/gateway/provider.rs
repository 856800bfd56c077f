//! Backend abstraction shared by the live, replay, mock, and scripted
//! providers.

use super::{PromptRequest, RequestDigest};

/// One chat call as seen by a backend: the canonical digest for
/// record/replay keying, the original request, and the rendered prompt.
pub struct ChatCall<'a> {
    pub digest: &'a RequestDigest,
    pub request: &'a PromptRequest,
    pub prompt: &'a str,
}

/// A chat-completion/embedding backend. Implementations must be shareable
/// across concurrent callers; the gateway enforces the in-flight limit.
pub trait Provider: Send + Sync {
    fn name(&self) -> &'static str;

    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError>;

    fn embed(&self, digest: &RequestDigest, text: &str) -> Result<Vec<f64>, ProviderError>;
}

/// Backend failure classification; only `Transport` and `RateLimited` are
/// retried.
#[derive(Debug, Clone)]
pub enum ProviderError {
    Transport(String),
    RateLimited(String),
    FixtureMiss(String),
    Fatal(String),
}
