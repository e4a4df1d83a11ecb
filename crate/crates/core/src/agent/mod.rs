//! The observe-reason-act loop.
//!
//! Each turn the backend sees the current view plus its own transcript so
//! far, replies with free text ending in a command block, and the parsed
//! action is applied to the environment. The episode ends on `GUESS`/`STOP`,
//! when the turn budget runs out, or when a guess reaches the configured
//! confidence threshold.

mod action;
mod backend;
mod chat;
mod prompt;
mod proposal;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{describe_action, parse_action, serialize_action, Guess, ParseError, ParsedOutput};
pub use backend::{BackendError, ModelBackend, ModelRequest, OracleBackend, ReplayBackend, ReplayLog, ScriptedBackend};
pub use chat::{response_text, ChatBackend, ChatConfig, ImageTransport, API_BASE_VAR, API_KEY_VAR};
pub use prompt::{build_prompt, HistoryEntry, PromptTemplates};
pub use proposal::{
    mercator_pixel, propose_location, MapProvider, MapTile, Marker, Proposal, ProposalConfig, ProposalError,
    ProposalExchange, ProposalStage, ProviderError, StubMapProvider, DEFAULT_ZOOM,
};

use crate::env::{Action, EnvConfig, EnvError, Environment, Observation, PanoSource, StepOutcome};
use crate::geo::{geo_score, haversine_km, GeoPoint};
use crate::graph::NavGraph;
use crate::labels::PlaceLabels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    /// Turns are numbered `0..=max_turns`; the last one must guess.
    pub max_turns: u32,
    /// End the episode once a guess carries at least this confidence.
    pub stop_on_confidence: Option<f64>,
    pub max_retries: u32,
    /// First backoff; doubles on each further retry.
    pub retry_backoff_ms: u64,
    pub reprompt_on_parse_error: bool,
    pub start_heading: f64,
    pub env: EnvConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_turns: 10,
            stop_on_confidence: None,
            max_retries: 3,
            retry_backoff_ms: 250,
            reprompt_on_parse_error: true,
            start_heading: 0.0,
            env: EnvConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("turn {turn}: {source} (after {retries} retries)")]
    Backend { turn: u32, retries: u32, source: BackendError },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Guess,
    Stop,
    MaxTurns,
    Confidence,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub turn: u32,
    pub node: String,
    pub heading: f64,
    pub view_hash: String,
    pub prompt: String,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reprompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reprompt_reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub action: Action,
    /// The hypothesis in force after this turn.
    pub guess: Option<Guess>,
    pub outcome: StepOutcome,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub point: GeoPoint,
    pub labels: PlaceLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub graph_id: String,
    pub backend: String,
    pub start_node: String,
    pub start_heading: f64,
    pub turns: Vec<AgentTurn>,
    pub final_guess: Option<Guess>,
    pub ground_truth: GroundTruth,
    pub distance_km: Option<f64>,
    pub score: Option<f64>,
    pub termination: Termination,
    pub backend_retries: u32,
    pub parse_failures: u32,
}

impl EpisodeTrace {
    /// Predicted labels, empty when the episode ended without a guess.
    pub fn predicted_labels(&self) -> Option<&PlaceLabels> {
        self.final_guess.as_ref().map(|g| &g.labels)
    }
}

fn describe_outcome(outcome: &StepOutcome) -> String {
    match outcome {
        StepOutcome::Rotated { heading } => format!("now facing {heading:.1} deg"),
        StepOutcome::Moved { length_m, .. } => format!("moved {length_m:.1} m to the next panorama"),
        StepOutcome::NoNavigablePath => "no street link in that direction; position unchanged".into(),
        StepOutcome::Terminated => "episode ended".into(),
    }
}

fn complete_with_retry(
    backend: &mut dyn ModelBackend,
    request: &ModelRequest<'_>,
    cfg: &EpisodeConfig,
    turn: u32,
    retries: &mut u32,
) -> Result<String, AgentError> {
    let mut attempt = 0;
    loop {
        match backend.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < cfg.max_retries => {
                let wait = cfg.retry_backoff_ms.saturating_mul(1 << attempt.min(16));
                tracing::warn!(turn, attempt, "retrying backend call: {e}");
                if wait > 0 {
                    std::thread::sleep(Duration::from_millis(wait));
                }
                attempt += 1;
                *retries += 1;
            }
            Err(source) => return Err(AgentError::Backend { turn, retries: attempt, source }),
        }
    }
}

/// Plays one episode from the graph's start node and scores the final guess
/// against the start node's location and labels.
pub fn run_episode(
    graph: &NavGraph,
    panos: &dyn PanoSource,
    backend: &mut dyn ModelBackend,
    cfg: &EpisodeConfig,
    templates: &PromptTemplates,
) -> Result<EpisodeTrace, AgentError> {
    let env = Environment::new(graph, panos, cfg.env);
    let (mut state, mut obs): (_, Observation) = env.reset(None, cfg.start_heading)?;
    let start = graph.start_node();

    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut turns = Vec::new();
    let mut last_guess: Option<Guess> = None;
    let mut total_retries = 0;
    let mut parse_failures = 0;

    let termination = loop {
        let turn = state.turn;
        let last = turn >= cfg.max_turns;
        let prompt = build_prompt(&obs, &history, templates, last);
        let image = obs.view.image();
        let mut retries = 0;
        let request = ModelRequest { system: &templates.system, prompt: &prompt, image, final_turn: last };
        let reply = complete_with_retry(backend, &request, cfg, turn, &mut retries)?;

        let mut reprompt = None;
        let mut reprompt_reply = None;
        let mut parse_error = None;
        let mut parsed = parse_action(&reply);
        if let Err(e) = &parsed {
            parse_failures += 1;
            parse_error = Some(e.to_string());
            if cfg.reprompt_on_parse_error {
                let text = format!("{prompt}\nYour previous reply:\n{}\n\n{}\n", reply.trim(), templates.reprompt);
                let request = ModelRequest { prompt: &text, ..request };
                let second = complete_with_retry(backend, &request, cfg, turn, &mut retries)?;
                parsed = parse_action(&second);
                if let Err(e) = &parsed {
                    parse_failures += 1;
                    parse_error = Some(e.to_string());
                }
                reprompt = Some(text);
                reprompt_reply = Some(second);
            }
        }
        total_retries += retries;

        let (mut action, mut reason) = match parsed {
            Ok(p) => {
                if let Some(g) = p.guess {
                    last_guess = Some(g);
                }
                let reason = match p.action {
                    Action::Guess { .. } => Some(Termination::Guess),
                    Action::Stop => Some(Termination::Stop),
                    _ => None,
                };
                (p.action, reason)
            }
            Err(_) => (Action::Stop, Some(Termination::ParseFailure)),
        };
        if reason.is_none() {
            let confident = cfg
                .stop_on_confidence
                .zip(last_guess.as_ref().and_then(|g| g.confidence))
                .is_some_and(|(threshold, c)| c >= threshold);
            if confident {
                reason = Some(Termination::Confidence);
            } else if last {
                reason = Some(Termination::MaxTurns);
            }
            if reason.is_some() {
                action = Action::Stop;
            }
        }

        let step = env.step(&state, &action)?;
        history.push(HistoryEntry {
            turn,
            reasoning: reprompt_reply.clone().unwrap_or_else(|| reply.clone()),
            action: describe_action(&action),
            result: describe_outcome(&step.outcome),
        });
        turns.push(AgentTurn {
            turn,
            node: state.node.clone(),
            heading: state.heading,
            view_hash: obs.view.hash().to_string(),
            prompt,
            reply,
            reprompt,
            reprompt_reply,
            parse_error,
            action,
            guess: last_guess.clone(),
            outcome: step.outcome,
            retries,
        });

        if let Some(reason) = reason {
            break reason;
        }
        state = step.state;
        obs = step.observation.expect("non-terminal step yields an observation");
    };

    let truth = GroundTruth { point: start.location, labels: start.labels.clone() };
    let distance_km = last_guess.as_ref().map(|g| haversine_km(g.point, truth.point));
    let score = distance_km.map(|d| geo_score(d).expect("haversine distance is finite and non-negative"));
    Ok(EpisodeTrace {
        graph_id: graph.graph_id().to_string(),
        backend: backend.name().to_string(),
        start_node: start.id.clone(),
        start_heading: cfg.start_heading,
        turns,
        final_guess: last_guess,
        ground_truth: truth,
        distance_km,
        score,
        termination,
        backend_retries: total_retries,
        parse_failures,
    })
}
