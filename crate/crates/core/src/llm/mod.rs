//! Transport and prompt layer for the LLM-assisted selection steps: an
//! OpenAI-compatible chat client with strict-JSON prompting and transcript
//! record/replay so every pipeline path is testable offline.

use std::collections::HashMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OdError, Result};
use crate::registry::{ModelMetadata, Tag};

/// Environment variable holding the bearer token.
pub const ENV_API_KEY: &str = "OD_LLM_API_KEY";
/// Environment variable holding the endpoint base URL.
pub const ENV_ENDPOINT: &str = "OD_LLM_ENDPOINT";
/// Environment variable holding the model name.
pub const ENV_MODEL: &str = "OD_LLM_MODEL";

const DEFAULT_MODEL: &str = "gpt-4o-mini";

/// Connection settings for a chat-completions endpoint.
#[derive(Clone)]
pub struct LlmConfig {
    /// Base URL; the client POSTs to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Bearer token; read from `OD_LLM_API_KEY` by default, overridable.
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> LlmConfig {
        LlmConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(ENV_API_KEY).ok(),
            timeout_secs: 30,
            max_retries: 2,
            temperature: 0.0,
        }
    }

    /// Builds a config from `OD_LLM_ENDPOINT` / `OD_LLM_MODEL` /
    /// `OD_LLM_API_KEY`. Fails when no endpoint is configured.
    pub fn from_env() -> Result<LlmConfig> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| {
            OdError::LlmTransport(format!("no endpoint configured; set {ENV_ENDPOINT}"))
        })?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Ok(LlmConfig::new(endpoint, model))
    }

    fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(OdError::InvalidParam("llm timeout must be positive".into()));
        }
        Ok(())
    }
}

// manual Debug so the api key can never leak into logs or panic messages
impl fmt::Debug for LlmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("temperature", &self.temperature)
            .finish()
    }
}

/// One chat turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

/// One transcript line: the request hash, the request body that produced it,
/// and the raw HTTP response body. Transcripts are line-delimited JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub hash: String,
    pub request: serde_json::Value,
    pub response: String,
}

/// Reads a whole transcript file.
pub fn load_transcript(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TranscriptRecord = serde_json::from_str(line).map_err(|e| {
            OdError::LlmParse(format!("transcript line {}: {e}", i + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Appends one record to a transcript file, creating it if needed.
pub fn append_transcript(path: &Path, record: &TranscriptRecord) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(record)?;
    writeln!(file, "{line}")?;
    Ok(())
}

/// Stable request identity: sha256 over the canonical JSON of the full
/// message list plus the model name.
pub fn request_hash(model: &str, messages: &[ChatMessage]) -> String {
    let canonical = serde_json::json!({ "messages": messages, "model": model });
    let bytes = serde_json::to_vec(&canonical).expect("serializable request");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

enum ClientMode {
    Live,
    Record { path: PathBuf },
    Replay { responses: HashMap<String, String> },
}

/// Chat client. One in-flight request per instance; callers needing
/// parallelism create independent clients.
pub struct LlmClient {
    config: LlmConfig,
    mode: ClientMode,
}

impl LlmClient {
    pub fn live(config: LlmConfig) -> Result<LlmClient> {
        config.validate()?;
        Ok(LlmClient { config, mode: ClientMode::Live })
    }

    /// Live client that appends every exchange to a transcript file.
    pub fn record(config: LlmConfig, path: impl Into<PathBuf>) -> Result<LlmClient> {
        config.validate()?;
        Ok(LlmClient { config, mode: ClientMode::Record { path: path.into() } })
    }

    /// Offline client answering requests from a transcript. The config only
    /// contributes the model name used for request hashing.
    pub fn replay(config: LlmConfig, path: &Path) -> Result<LlmClient> {
        config.validate()?;
        let mut responses = HashMap::new();
        for rec in load_transcript(path)? {
            responses.insert(rec.hash, rec.response);
        }
        Ok(LlmClient { config, mode: ClientMode::Replay { responses } })
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    /// Sends one chat request and returns the first choice's content.
    pub fn chat(&mut self, messages: &[ChatMessage]) -> Result<String> {
        let hash = request_hash(&self.config.model, messages);
        let body = match &self.mode {
            ClientMode::Replay { responses } => responses
                .get(&hash)
                .cloned()
                .ok_or_else(|| OdError::ReplayMiss(hash.clone()))?,
            ClientMode::Live => self.http_call(messages)?,
            ClientMode::Record { path } => {
                let path = path.clone();
                let body = self.http_call(messages)?;
                let request = serde_json::json!({
                    "model": self.config.model,
                    "messages": messages,
                    "temperature": self.config.temperature,
                });
                append_transcript(&path, &TranscriptRecord {
                    hash: hash.clone(),
                    request,
                    response: body.clone(),
                })?;
                body
            }
        };
        extract_choice_content(&body)
    }

    fn http_call(&self, messages: &[ChatMessage]) -> Result<String> {
        let url = format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        );
        let payload = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.config.timeout_secs)))
            .build()
            .into();
        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                // exponential backoff: 1s, 2s, 4s, ...
                std::thread::sleep(Duration::from_secs(1 << (attempt - 1)));
            }
            let mut req = agent.post(&url);
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(&payload) {
                Ok(mut resp) => match resp.body_mut().read_to_string() {
                    Ok(text) => return Ok(text),
                    Err(e) => last_err = format!("reading response body: {e}"),
                },
                Err(ureq::Error::StatusCode(code)) => {
                    last_err = format!("http status {code}");
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(OdError::LlmTransport(format!(
            "{} after {} attempts: {last_err}",
            url,
            self.config.max_retries + 1
        )))
    }
}

/// Pulls the first choice's message content out of a chat-completions body.
fn extract_choice_content(body: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| OdError::LlmParse(format!("response body is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| {
            OdError::LlmParse("response lacks choices[0].message.content".into())
        })
}

/// Fixed template for the tag-mapping step: the system message states the
/// closed vocabulary and the required JSON shape; the user message carries
/// the profile text and optional notes. Byte-stable for equal inputs.
pub fn render_tag_prompt(
    profile_text: &str,
    notes: Option<&str>,
    vocabulary: &[Tag],
) -> Vec<ChatMessage> {
    let vocab = vocabulary
        .iter()
        .map(Tag::as_str)
        .collect::<Vec<_>>()
        .join(", ");
    let system = format!(
        "You assign descriptive tags to datasets for outlier-detector selection. \
         Choose only from this closed vocabulary: {vocab}. \
         Reply with exactly one JSON object of the shape {{\"tags\": [\"tag\", ...]}} \
         and nothing else."
    );
    let mut user = profile_text.to_string();
    if let Some(n) = notes {
        user.push_str("\n\nAdditional notes: ");
        user.push_str(n);
    }
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Fixed template for the refinement step. Candidates are listed in
/// descending score order (ties lexicographic by id) with their metadata.
pub fn render_refine_prompt(
    candidates: &[(&ModelMetadata, f64)],
    tags: &[Tag],
    notes: Option<&str>,
) -> Vec<ChatMessage> {
    let mut ordered: Vec<&(&ModelMetadata, f64)> = candidates.iter().collect();
    ordered.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.id.cmp(&b.0.id))
    });
    let allowed = ordered
        .iter()
        .map(|(m, _)| m.id.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let system = format!(
        "You pick the single best outlier detector for a dataset from a fixed \
         candidate list. Reply with exactly one JSON object of the shape \
         {{\"model\": \"<one of: {allowed}>\", \"reason\": \"...\"}} and nothing else."
    );
    let tag_line = if tags.is_empty() {
        "(none)".to_string()
    } else {
        tags.iter().map(Tag::as_str).collect::<Vec<_>>().join(", ")
    };
    let mut user = format!("Dataset tags: {tag_line}.\n\nCandidates:\n");
    for (meta, score) in &ordered {
        let strengths = meta
            .strengths
            .iter()
            .map(Tag::as_str)
            .collect::<Vec<_>>()
            .join(", ");
        let weaknesses = meta
            .weaknesses
            .iter()
            .map(Tag::as_str)
            .collect::<Vec<_>>()
            .join(", ");
        user.push_str(&format!(
            "- {} (S={score:.4}): strengths: [{strengths}]; weaknesses: [{weaknesses}]",
            meta.id
        ));
        if !meta.notes.is_empty() {
            user.push_str(&format!("; {}", meta.notes));
        }
        user.push('\n');
    }
    if let Some(n) = notes {
        user.push_str("\nAdditional notes: ");
        user.push_str(n);
    }
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Extracts the first parseable JSON object from free-form text, tolerating
/// surrounding prose and markdown code fences.
pub fn extract_first_json(text: &str) -> Result<serde_json::Value> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(open) = text[start..].find('{').map(|i| start + i) {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(v) = serde_json::from_str(&text[open..=i]) {
                            return Ok(v);
                        }
                        break; // balanced but unparseable; try the next '{'
                    }
                }
                _ => {}
            }
        }
        start = open + 1;
    }
    Err(OdError::LlmParse("no JSON object found in reply".into()))
}

/// Parses a tag-mapping reply: requires `{"tags": [<strings>]}`.
pub fn parse_tags_reply(text: &str) -> Result<Vec<String>> {
    let value = extract_first_json(text)?;
    let arr = value
        .get("tags")
        .and_then(|t| t.as_array())
        .ok_or_else(|| OdError::LlmParse("reply lacks a \"tags\" array".into()))?;
    arr.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| OdError::LlmParse("non-string entry in \"tags\"".into()))
        })
        .collect()
}

/// Parses a refinement reply: requires `{"model": "..."}"`; a missing reason
/// becomes the empty string.
pub fn parse_refine_reply(text: &str) -> Result<(String, String)> {
    let value = extract_first_json(text)?;
    let model = value
        .get("model")
        .and_then(|m| m.as_str())
        .ok_or_else(|| OdError::LlmParse("reply lacks a \"model\" string".into()))?;
    let reason = value
        .get("reason")
        .and_then(|r| r.as_str())
        .unwrap_or_default();
    Ok((model.to_string(), reason.to_string()))
}

/// Builds the raw HTTP body a compliant server would return for `content` —
/// the test-side helper for writing replay transcripts.
pub fn chat_body_with_content(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}
