use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{serialize_action, Guess};
use crate::env::{Action, FloatImage};
use crate::geo::GeoPoint;
use crate::labels::PlaceLabels;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Transient: rate limits, server errors, dropped connections.
    #[error("retryable backend failure: {0}")]
    Retryable(String),
    #[error("fatal backend failure: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Retryable(_))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelRequest<'a> {
    pub system: &'a str,
    pub prompt: &'a str,
    pub image: Option<&'a FloatImage>,
    /// The agent must answer with a final guess on this request.
    pub final_turn: bool,
}

/// A model that turns a prompt (and optional view image) into raw text.
pub trait ModelBackend: Send {
    fn name(&self) -> &str;

    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<String, BackendError>;

    /// Identical requests yield identical replies.
    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

/// Replies from a fixed list in order, repeating the last reply once exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    replies: Vec<String>,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self::named("scripted", replies)
    }

    pub fn named(name: impl Into<String>, replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { name: name.into(), replies: replies.into_iter().map(Into::into).collect(), cursor: 0 }
    }

    pub fn calls(&self) -> usize {
        self.cursor
    }
}

impl ModelBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&mut self, _request: &ModelRequest<'_>) -> Result<String, BackendError> {
        let reply = self
            .replies
            .get(self.cursor.min(self.replies.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| BackendError::Fatal("scripted backend has no replies".into()))?;
        self.cursor += 1;
        Ok(reply)
    }
}

/// Recorded replies keyed by episode. Lookup order for an episode of graph
/// `g` at level `l`: `"g@l"`, then `"g"`, then `"*"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayLog {
    pub episodes: BTreeMap<String, Vec<String>>,
}

impl ReplayLog {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Fatal(format!("replay file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("replay file {}: {e}", path.display())))
    }

    pub fn backend_for(&self, graph_id: &str, level: &str) -> Option<ReplayBackend> {
        [format!("{graph_id}@{level}"), graph_id.to_string(), "*".to_string()]
            .iter()
            .find_map(|k| self.episodes.get(k))
            .map(|replies| ReplayBackend::new(replies.clone()))
    }
}

/// Plays back one episode's recorded replies; running past the end is fatal.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    replies: Vec<String>,
    cursor: usize,
}

impl ReplayBackend {
    pub fn new(replies: Vec<String>) -> Self {
        Self { replies, cursor: 0 }
    }
}

impl ModelBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&mut self, _request: &ModelRequest<'_>) -> Result<String, BackendError> {
        let reply = self
            .replies
            .get(self.cursor)
            .cloned()
            .ok_or_else(|| BackendError::Fatal(format!("replay exhausted after {} replies", self.replies.len())))?;
        self.cursor += 1;
        Ok(reply)
    }
}

/// Answers with the ground truth it was constructed with, after `explore_turns`
/// rotations. An evaluation control, never a real model: the truth reaches it
/// through the constructor, not through prompts.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    truth: GeoPoint,
    labels: PlaceLabels,
    explore_turns: usize,
    calls: usize,
}

impl OracleBackend {
    pub fn new(truth: GeoPoint, labels: PlaceLabels, explore_turns: usize) -> Self {
        Self { truth, labels, explore_turns, calls: 0 }
    }
}

impl ModelBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<String, BackendError> {
        let reply = if self.calls < self.explore_turns && !request.final_turn {
            format!("Looking around first.\n{}", serialize_action(&Action::Rotate { delta: 90.0 }, None))
        } else {
            let labels = PlaceLabels { continent: None, ..self.labels.clone() };
            let guess = Guess { point: self.truth, labels: labels.clone(), confidence: Some(1.0) };
            format!("Certain.\n{}", serialize_action(&Action::Guess { point: self.truth, labels }, Some(&guess)))
        };
        self.calls += 1;
        Ok(reply)
    }
}
