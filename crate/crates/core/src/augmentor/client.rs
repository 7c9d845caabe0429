//! OpenAI-compatible chat-completions client.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{Prompt, PromptTemplate};
use super::{AugmentError, CandidateSource, Result, Strategy};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "SCR_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmenterConfig {
    /// Candidates requested per source text.
    pub k: usize,
    pub model_id: String,
    /// Full URL of the `/v1/chat/completions` endpoint.
    pub endpoint_url: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub concurrency_limit: usize,
    pub timeout_secs: u64,
    pub retry_backoff_ms: u64,
}

impl Default for AugmenterConfig {
    fn default() -> Self {
        Self {
            k: 5,
            model_id: "llama-2-7b-chat".into(),
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            temperature: 0.7,
            max_retries: 3,
            concurrency_limit: 4,
            timeout_secs: 60,
            retry_backoff_ms: 500,
        }
    }
}

impl AugmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(AugmentError::Config("k must be at least 1".into()));
        }
        if self.concurrency_limit == 0 {
            return Err(AugmentError::Config("concurrency_limit must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(AugmentError::Config("temperature must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON POST. Implementations return `Err` only for failures below
/// HTTP (connection refused, timeout); error statuses come back as responses.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, String>;
}

/// Blocking HTTP transport.
#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Wraps a transport and counts every call that reaches it.
#[derive(Debug, Default)]
pub struct CountingTransport<T> {
    inner: T,
    calls: Arc<AtomicUsize>,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// A shared handle to the counter, usable after the transport is moved.
    pub fn counter(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.calls)
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.post_json(url, api_key, body, timeout)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, String> {
        (**self).post_json(url, api_key, body, timeout)
    }
}

/// Request body in the chat-completions wire format.
pub fn request_body(prompt: &Prompt, cfg: &AugmenterConfig) -> Value {
    json!({
        "model": cfg.model_id,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": cfg.temperature,
    })
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

fn reply_content(body: &str) -> Option<String> {
    let resp: ChatResponse = serde_json::from_str(body).ok()?;
    resp.choices.into_iter().next()?.message.content
}

/// Strips a `N.`, `N)` or `-` list marker. Returns the marker kind
/// (`true` for numbered) and the item text.
fn strip_marker(line: &str) -> Option<(bool, &str)> {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix('-') {
        return Some((false, rest));
    }
    let digits = line.find(|c: char| !c.is_ascii_digit())?;
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    rest.strip_prefix('.')
        .or_else(|| rest.strip_prefix(')'))
        .map(|r| (true, r))
}

fn clean_item(item: &str) -> &str {
    let item = item.trim();
    let unquoted = item
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(item);
    unquoted.trim()
}

/// Extracts list items from an LLM reply. Numbered items win over dash
/// items when both appear; lines without a marker are ignored.
pub fn parse_candidates(reply: &str) -> Vec<String> {
    let mut numbered = Vec::new();
    let mut dashed = Vec::new();
    for line in reply.lines() {
        if let Some((is_numbered, item)) = strip_marker(line) {
            let item = clean_item(item);
            if item.is_empty() {
                continue;
            }
            if is_numbered {
                numbered.push(item.to_owned());
            } else {
                dashed.push(item.to_owned());
            }
        }
    }
    if numbered.is_empty() {
        dashed
    } else {
        numbered
    }
}

/// Sends `prompt` and returns exactly `cfg.k` candidates, retrying the same
/// prompt up to `cfg.max_retries` times on transport errors, server errors or
/// short replies.
pub fn query_llm(
    prompt: &Prompt,
    cfg: &AugmenterConfig,
    transport: &dyn Transport,
    api_key: &str,
) -> Result<Vec<String>> {
    cfg.validate()?;
    let body = request_body(prompt, cfg);
    let timeout = Duration::from_secs(cfg.timeout_secs.max(1));
    let attempts = cfg.max_retries + 1;
    let mut last_transport: Option<(String, String)> = None;
    let mut last_malformed: Option<(usize, String)> = None;
    for attempt in 0..attempts {
        if attempt > 0 && cfg.retry_backoff_ms > 0 {
            std::thread::sleep(Duration::from_millis(cfg.retry_backoff_ms * attempt as u64));
        }
        let resp = match transport.post_json(&cfg.endpoint_url, api_key, &body, timeout) {
            Ok(r) => r,
            Err(e) => {
                last_transport = Some((e, String::new()));
                continue;
            }
        };
        if resp.status == 401 || resp.status == 403 {
            return Err(AugmentError::Auth {
                status: resp.status,
                body: resp.body,
            });
        }
        if !(200..300).contains(&resp.status) {
            last_transport = Some((format!("HTTP {}", resp.status), resp.body));
            continue;
        }
        let Some(content) = reply_content(&resp.body) else {
            last_malformed = Some((0, resp.body));
            continue;
        };
        let mut candidates = parse_candidates(&content);
        if candidates.len() >= cfg.k {
            candidates.truncate(cfg.k);
            return Ok(candidates);
        }
        last_malformed = Some((candidates.len(), resp.body));
    }
    match (last_malformed, last_transport) {
        (Some((parsed, body)), _) => Err(AugmentError::MalformedReply {
            attempts,
            parsed,
            wanted: cfg.k,
            body,
        }),
        (None, Some((message, body))) => Err(AugmentError::Transport {
            attempts,
            message,
            body,
        }),
        (None, None) => unreachable!("at least one attempt is made"),
    }
}

/// Candidate source backed by a remote LLM.
pub struct LlmSource<T: Transport> {
    cfg: AugmenterConfig,
    transport: T,
    api_key: String,
    templates: [PromptTemplate; 2],
}

impl<T: Transport> LlmSource<T> {
    pub fn new(cfg: AugmenterConfig, transport: T, api_key: impl Into<String>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            transport,
            api_key: api_key.into(),
            templates: [
                PromptTemplate::builtin(Strategy::Ee),
                PromptTemplate::builtin(Strategy::Ce),
            ],
        })
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(cfg: AugmenterConfig, transport: T) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(AugmentError::MissingCredential(API_KEY_ENV))?;
        Self::new(cfg, transport, key)
    }

    /// Replaces the builtin template for the template's strategy.
    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        let slot = match template.strategy {
            Strategy::Ee => 0,
            Strategy::Ce => 1,
        };
        self.templates[slot] = template;
        self
    }

    pub fn config(&self) -> &AugmenterConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

impl<T: Transport> CandidateSource for LlmSource<T> {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn fetch(&self, text: &str, strategy: Strategy, k: usize) -> Result<Vec<String>> {
        let template = match strategy {
            Strategy::Ee => &self.templates[0],
            Strategy::Ce => &self.templates[1],
        };
        let prompt = template.render(text, k);
        let cfg = AugmenterConfig {
            k,
            ..self.cfg.clone()
        };
        query_llm(&prompt, &cfg, &self.transport, &self.api_key)
    }
}
