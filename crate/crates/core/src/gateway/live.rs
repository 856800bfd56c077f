//! Live HTTP backend speaking the common chat-completions/embeddings wire
//! format, with bearer-token auth. Retries are handled by the gateway; this
//! backend only classifies failures as retryable or fatal.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::provider::{ChatCall, Provider, ProviderError};
use super::RequestDigest;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "AGENTOPIC_API_KEY";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Endpoint base, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub chat_model: String,
    pub embed_model: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl LiveConfig {
    /// Reads the API key from `AGENTOPIC_API_KEY`.
    pub fn from_env(
        base_url: impl Into<String>,
        chat_model: impl Into<String>,
        embed_model: impl Into<String>,
    ) -> Result<Self, ProviderError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| ProviderError::Fatal(format!("{API_KEY_ENV} is not set")))?;
        Ok(LiveConfig {
            base_url: base_url.into(),
            chat_model: chat_model.into(),
            embed_model: embed_model.into(),
            api_key,
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct LiveProvider {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build();
        LiveProvider {
            config,
            agent: ureq::Agent::new_with_config(agent_config),
        }
    }

    fn post(
        &self,
        path: &str,
        body: serde_json::Value,
    ) -> Result<serde_json::Value, ProviderError> {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut response = self
            .agent
            .post(&url)
            .header("authorization", &format!("Bearer {}", self.config.api_key))
            .header("content-type", "application/json")
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(format!("{url}: reading body: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| ProviderError::Fatal(format!("{url}: malformed response JSON: {e}"))),
            429 => Err(ProviderError::RateLimited(format!("{url}: HTTP 429"))),
            500..=599 => Err(ProviderError::Transport(format!("{url}: HTTP {status}"))),
            _ => Err(ProviderError::Fatal(format!(
                "{url}: HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl Provider for LiveProvider {
    fn name(&self) -> &'static str {
        "live"
    }

    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.chat_model,
            "messages": [{"role": "user", "content": call.prompt}],
            "temperature": call.request.temperature,
            "max_tokens": call.request.max_output_tokens,
        });
        let value = self.post("/chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| ProviderError::Fatal(format!("unexpected chat response shape: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Fatal("chat response has no choices".into()))
    }

    fn embed(&self, _digest: &RequestDigest, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = json!({
            "model": self.config.embed_model,
            "input": text,
        });
        let value = self.post("/embeddings", body)?;
        let parsed: EmbedResponse = serde_json::from_value(value)
            .map_err(|e| ProviderError::Fatal(format!("unexpected embed response shape: {e}")))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ProviderError::Fatal("embed response has no data".into()))
    }
}
