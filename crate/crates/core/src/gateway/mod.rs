//! Remote agents over the JSON chat-completions protocol.
//!
//! `POST {endpoint}/v1/chat/completions` with `Authorization: Bearer <key>`.
//! The key is read from `PUPPETEER_API_KEY` and never from config files.

pub mod mock;
mod prompt;
mod tool;

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{AgentOutput, AgentPool};
use crate::backend::{AgentBackend, BackendError};
use crate::orchestrator::SystemState;

pub use prompt::{placeholders_in, render_prompt, PromptTemplate, TemplateError, KNOWN_SLOTS};
pub use tool::{parse_tool_action, EchoToolHook, ToolAction, ToolHook, ToolParseError};

pub const API_KEY_VAR: &str = "PUPPETEER_API_KEY";
pub const COMPLETIONS_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("messages must not be empty".into())),
            Some(m) if m.role != Role::System => {
                Err(GatewayError::InvalidRequest("first message must be the system prompt".into()))
            }
            _ if self.max_tokens == 0 => Err(GatewayError::InvalidRequest("max_tokens must be positive".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Base URL, e.g. `https://api.example.com`.
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub max_tokens: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            max_in_flight: 3,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("environment variable {API_KEY_VAR} is not set")]
    MissingApiKey,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl GatewayError {
    pub fn status(&self) -> Option<u16> {
        match self {
            GatewayError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }

    fn retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Status { .. } | GatewayError::Transport(_) | GatewayError::Timeout | GatewayError::Protocol(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// The response had no usage block; counts are chars / 4.
    pub usage_estimated: bool,
}

impl From<Completion> for AgentOutput {
    fn from(c: Completion) -> Self {
        AgentOutput {
            text: c.text,
            tokens: c.prompt_tokens + c.completion_tokens,
            latent_correct: None,
            usage_estimated: c.usage_estimated,
        }
    }
}

/// Rough token count used when the server reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap();
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Blocking chat-completions client; shareable across threads.
pub struct GatewayClient {
    config: GatewayConfig,
    api_key: String,
    http: reqwest::blocking::Client,
    in_flight: InFlight,
}

impl GatewayClient {
    pub fn new(config: GatewayConfig, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        let api_key = api_key.into();
        if api_key.is_empty() {
            return Err(GatewayError::MissingApiKey);
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let cap = config.max_in_flight.max(1);
        Ok(Self {
            config,
            api_key,
            http,
            in_flight: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                cap,
            },
        })
    }

    /// Reads the key from `PUPPETEER_API_KEY`.
    pub fn from_env(config: GatewayConfig) -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_VAR).map_err(|_| GatewayError::MissingApiKey)?;
        Self::new(config, key)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// One request, no retries.
    pub fn call_remote(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let _permit = self.in_flight.acquire();
        let url = format!("{}{}", self.config.endpoint.trim_end_matches('/'), COMPLETIONS_PATH);
        let body = serde_json::to_vec(request).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let response = self
            .http
            .post(url)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        parse_completion(&text, request)
    }

    /// `call_remote` with up to `max_retries` retries and exponential backoff.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let mut attempt = 0;
        loop {
            match self.call_remote(request) {
                Ok(c) => return Ok(c),
                Err(e) if e.retryable() && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("remote call failed ({e}); retry {} in {wait} ms", attempt + 1);
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify(e: reqwest::Error) -> GatewayError {
    if e.is_timeout() {
        GatewayError::Timeout
    } else {
        GatewayError::Transport(e.to_string())
    }
}

/// Reads `choices[0].message.content` and `usage.{prompt,completion}_tokens`.
pub fn parse_completion(body: &str, request: &ChatRequest) -> Result<Completion, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?
        .to_string();
    let usage = v.get("usage").and_then(|u| {
        Some((
            u.get("prompt_tokens")?.as_u64()?,
            u.get("completion_tokens")?.as_u64()?,
        ))
    });
    Ok(match usage {
        Some((prompt_tokens, completion_tokens)) => Completion {
            text,
            prompt_tokens,
            completion_tokens,
            usage_estimated: false,
        },
        None => {
            log::warn!("response has no usage block; estimating tokens from length");
            let prompt: String = request.messages.iter().map(|m| m.content.as_str()).collect();
            Completion {
                prompt_tokens: estimate_tokens(&prompt),
                completion_tokens: estimate_tokens(&text),
                text,
                usage_estimated: true,
            }
        }
    })
}

/// Pool agents backed by remote models.
pub struct RemoteBackend {
    client: GatewayClient,
    tool_hook: Box<dyn ToolHook>,
}

impl RemoteBackend {
    pub fn new(client: GatewayClient) -> Self {
        Self {
            client,
            tool_hook: Box::new(EchoToolHook),
        }
    }

    pub fn with_tool_hook(mut self, hook: Box<dyn ToolHook>) -> Self {
        self.tool_hook = hook;
        self
    }

    pub fn request_for(&self, pool: &AgentPool, agent_index: usize, state: &SystemState) -> Result<ChatRequest, GatewayError> {
        let agent = pool
            .get(agent_index)
            .ok_or_else(|| GatewayError::InvalidRequest(format!("no agent at index {agent_index}")))?;
        let template = PromptTemplate::for_agent(agent)?;
        Ok(ChatRequest {
            model: agent.model_ref.clone(),
            messages: render_prompt(&template, state)?,
            temperature: agent.temperature(),
            max_tokens: self.client.config.max_tokens,
        })
    }
}

impl AgentBackend for RemoteBackend {
    fn execute(
        &self,
        pool: &AgentPool,
        agent_index: usize,
        state: &SystemState,
        _seed: u64,
    ) -> Result<AgentOutput, BackendError> {
        let request = self.request_for(pool, agent_index, state)?;
        let mut output: AgentOutput = self.client.complete(&request)?.into();
        if pool.agents()[agent_index].tool != crate::agent::Tool::None {
            if let Ok(action) = parse_tool_action(&output.text) {
                output.text = format!("{}\n{}", output.text, self.tool_hook.run(&action));
            }
        }
        Ok(output)
    }
}
