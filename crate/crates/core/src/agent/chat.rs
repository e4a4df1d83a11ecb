//! Chat-completions transport.
//!
//! Request body (`POST {base}/chat/completions`):
//!
//! ```json
//! {"model": "...", "temperature": 0,
//!  "messages": [{"role": "system", "content": "..."},
//!               {"role": "user", "content": [
//!                   {"type": "text", "text": "..."},
//!                   {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}]}
//! ```
//!
//! The reply text is `choices[0].message.content`.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendError, ModelBackend, ModelRequest};

pub const API_KEY_VAR: &str = "GEONAV_API_KEY";
pub const API_BASE_VAR: &str = "GEONAV_API_BASE";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ImageTransport {
    /// `data:` URL with the PNG inlined.
    #[default]
    InlineBase64,
    /// PNGs are written to `dir` as `<hash>.png` and referenced as `<url_prefix>/<hash>.png`.
    Url { url_prefix: String, dir: PathBuf },
    /// Send text only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub images: ImageTransport,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// JSON-lines log of request/response pairs.
    #[serde(default)]
    pub log_path: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    120
}

impl ChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            images: ImageTransport::default(),
            timeout_secs: default_timeout(),
            log_path: None,
        }
    }

    /// Endpoint from `GEONAV_API_BASE` and key from `GEONAV_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Option<Self> {
        let endpoint = std::env::var(API_BASE_VAR).ok()?;
        let mut cfg = Self::new(endpoint, model);
        cfg.api_key = std::env::var(API_KEY_VAR).ok();
        Some(cfg)
    }
}

/// Blocking chat-completions client pinned to temperature 0.
/// Clones share the connection pool and the exchange log.
#[derive(Clone)]
pub struct ChatBackend {
    config: ChatConfig,
    agent: ureq::Agent,
    log: Option<Arc<Mutex<File>>>,
}

impl ChatBackend {
    pub fn new(config: ChatConfig) -> Result<Self, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let log = match &config.log_path {
            Some(path) => Some(Arc::new(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| BackendError::Fatal(format!("exchange log {}: {e}", path.display())))?,
            ))),
            None => None,
        };
        Ok(Self { config, agent, log })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn image_part(&self, request: &ModelRequest<'_>) -> Result<Option<Value>, BackendError> {
        let Some(img) = request.image else {
            return Ok(None);
        };
        let url = match &self.config.images {
            ImageTransport::None => return Ok(None),
            ImageTransport::InlineBase64 => {
                format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(img.to_png()))
            }
            ImageTransport::Url { url_prefix, dir } => {
                let name = format!("{}.png", img.content_hash());
                let path = dir.join(&name);
                if !path.exists() {
                    std::fs::write(&path, img.to_png())
                        .map_err(|e| BackendError::Fatal(format!("writing {}: {e}", path.display())))?;
                }
                format!("{}/{name}", url_prefix.trim_end_matches('/'))
            }
        };
        Ok(Some(json!({"type": "image_url", "image_url": {"url": url}})))
    }

    pub fn request_body(&self, request: &ModelRequest<'_>) -> Result<Value, BackendError> {
        let mut content = vec![json!({"type": "text", "text": request.prompt})];
        content.extend(self.image_part(request)?);
        Ok(json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": content},
            ],
        }))
    }

    fn record(&self, request: &Value, status: Option<u16>, response: &str) {
        let Some(log) = &self.log else { return };
        let line = json!({"request": request, "status": status, "response": response});
        let mut f = log.lock().expect("exchange log poisoned");
        if let Err(e) = writeln!(f, "{line}") {
            tracing::warn!("failed to append exchange log: {e}");
        }
    }
}

/// Extracts `choices[0].message.content` from a response body.
pub fn response_text(body: &str) -> Result<String, BackendError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // some servers return content parts
        Value::Array(parts) => {
            let text: Vec<&str> = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            if text.is_empty() {
                Err(BackendError::Fatal("response content has no text parts".into()))
            } else {
                Ok(text.join(""))
            }
        }
        _ => Err(BackendError::Fatal("response missing choices[0].message.content".into())),
    }
}

fn classify_status(status: u16, body: &str) -> BackendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    if status == 429 || status == 408 || (500..600).contains(&status) {
        BackendError::Retryable(msg)
    } else {
        BackendError::Fatal(msg)
    }
}

impl ModelBackend for ChatBackend {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<String, BackendError> {
        let body = self.request_body(request)?;
        let mut req = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(
                e @ (ureq::Error::Io(_)
                | ureq::Error::Timeout(_)
                | ureq::Error::HostNotFound
                | ureq::Error::ConnectionFailed),
            ) => {
                self.record(&body, None, &e.to_string());
                return Err(BackendError::Retryable(e.to_string()));
            }
            Err(e) => {
                self.record(&body, None, &e.to_string());
                return Err(BackendError::Fatal(e.to_string()));
            }
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Retryable(format!("reading response body: {e}")))?;
        self.record(&body, Some(status), &text);
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        response_text(&text)
    }
}
