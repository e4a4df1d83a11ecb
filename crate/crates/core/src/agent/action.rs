//! The action grammar the model answers in.
//!
//! A reply carries one command block, ideally fenced:
//!
//! ````text
//! ```action
//! GUESS <lat>,<lon> "<country>/<city>/<street>" <confidence>
//! ROTATE <+/-degrees> [left|right]
//! ```
//! ````
//!
//! Commands are `ROTATE`, `MOVE`, `GUESS` and `STOP`, case-insensitive. A
//! `GUESS` line next to `ROTATE`/`MOVE` is an interim hypothesis; a `GUESS`
//! alone ends the episode. Without a fence, the whole reply is scanned.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;
use crate::geo::GeoPoint;
use crate::labels::PlaceLabels;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no command found in model output")]
    NoCommand { raw: String },
    #[error("invalid {field} in model output: {value}")]
    InvalidValue { field: &'static str, value: String, raw: String },
}

impl ParseError {
    pub fn raw(&self) -> &str {
        match self {
            ParseError::NoCommand { raw } | ParseError::InvalidValue { raw, .. } => raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guess {
    pub point: GeoPoint,
    pub labels: PlaceLabels,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub action: Action,
    pub guess: Option<Guess>,
}

const NUM: &str = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?";

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z_-]*[ \t]*\r?\n?(.*?)```").unwrap());
static GUESS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r#"(?i)\bGUESS\b\s*:?\s*\(?\s*({NUM})\s*,\s*({NUM})(?:\s*\))?(?:\s+"([^"]*)")?(?:\s+({NUM}))?"#
    ))
    .unwrap()
});
static ROTATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\bROTATE\b\s*:?\s*({NUM})\s*(?:°|deg(?:rees?)?\b)?\s*(left|right)?")).unwrap()
});
static MOVE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bMOVE\b").unwrap());
static STOP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bSTOP\b").unwrap());

fn has_command(text: &str) -> bool {
    GUESS.is_match(text) || ROTATE.is_match(text) || MOVE.is_match(text) || STOP.is_match(text)
}

fn invalid(field: &'static str, value: &str, raw: &str) -> ParseError {
    ParseError::InvalidValue { field, value: value.to_string(), raw: raw.to_string() }
}

fn parse_labels(spec: &str) -> PlaceLabels {
    let mut parts = spec.split('/').map(|s| Some(s.trim().to_string()));
    let country = parts.next().flatten();
    let city = parts.next().flatten();
    let street = parts.next().flatten();
    PlaceLabels::new(street, city, country, None)
}

fn parse_guess(caps: &regex::Captures<'_>, raw: &str) -> Result<Guess, ParseError> {
    let lat: f64 = caps[1].parse().map_err(|_| invalid("latitude", &caps[1], raw))?;
    let lon: f64 = caps[2].parse().map_err(|_| invalid("longitude", &caps[2], raw))?;
    let point = GeoPoint::new(lat, lon).map_err(|e| invalid("coordinates", &e.to_string(), raw))?;
    let labels = caps.get(3).map(|m| parse_labels(m.as_str())).unwrap_or_default();
    let confidence = match caps.get(4) {
        Some(m) => {
            let c: f64 = m.as_str().parse().map_err(|_| invalid("confidence", m.as_str(), raw))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(invalid("confidence", m.as_str(), raw));
            }
            Some(c)
        }
        None => None,
    };
    Ok(Guess { point, labels, confidence })
}

/// Extracts the action (and any guess) from raw model output.
pub fn parse_action(raw: &str) -> Result<ParsedOutput, ParseError> {
    let body = FENCE
        .captures_iter(raw)
        .filter_map(|c| c.get(1))
        .map(|m| m.as_str())
        .filter(|b| has_command(b))
        .last()
        .unwrap_or(raw);

    let guess = match GUESS.captures_iter(body).last() {
        Some(c) => Some(parse_guess(&c, raw)?),
        None => None,
    };

    // Latest motion/stop command by position; GUESS spans are excluded so
    // that labels such as "stop street" do not count.
    let guess_spans: Vec<(usize, usize)> = GUESS.find_iter(body).map(|m| (m.start(), m.end())).collect();
    let outside = |start: usize| !guess_spans.iter().any(|&(s, e)| start >= s && start < e);
    let mut best: Option<(usize, Action)> = None;
    let mut consider = |pos: usize, action: Action| {
        if outside(pos) && best.as_ref().is_none_or(|(p, _)| pos >= *p) {
            best = Some((pos, action));
        }
    };
    for c in ROTATE.captures_iter(body) {
        let m = c.get(0).unwrap();
        let mut delta: f64 = c[1].parse().map_err(|_| invalid("rotation", &c[1], raw))?;
        if c.get(2).is_some_and(|d| d.as_str().eq_ignore_ascii_case("left")) {
            delta = -delta;
        }
        if !(delta.abs() < 360.0) {
            return Err(invalid("rotation", &c[1], raw));
        }
        consider(m.start(), Action::Rotate { delta });
    }
    for m in MOVE.find_iter(body) {
        consider(m.start(), Action::Move);
    }
    for m in STOP.find_iter(body) {
        consider(m.start(), Action::Stop);
    }

    match (best, guess) {
        (Some((_, action)), guess) => Ok(ParsedOutput { action, guess }),
        (None, Some(g)) => {
            Ok(ParsedOutput { action: Action::Guess { point: g.point, labels: g.labels.clone() }, guess: Some(g) })
        }
        (None, None) => Err(ParseError::NoCommand { raw: raw.to_string() }),
    }
}

fn format_guess(g: &Guess) -> String {
    let l = &g.labels;
    let mut parts = vec![
        l.country.clone().unwrap_or_default(),
        l.city.clone().unwrap_or_default(),
        l.street.clone().unwrap_or_default(),
    ];
    while parts.last().is_some_and(String::is_empty) {
        parts.pop();
    }
    let mut line = format!("GUESS {},{} \"{}\"", g.point.lat(), g.point.lon(), parts.join("/"));
    if let Some(c) = g.confidence {
        line.push_str(&format!(" {c}"));
    }
    line
}

/// Renders an action (plus optional interim guess) as a fenced command block.
pub fn serialize_action(action: &Action, guess: Option<&Guess>) -> String {
    let mut lines = Vec::new();
    match action {
        Action::Guess { point, labels } => {
            let confidence = guess.and_then(|g| g.confidence);
            lines.push(format_guess(&Guess { point: *point, labels: labels.clone(), confidence }));
        }
        other => {
            if let Some(g) = guess {
                lines.push(format_guess(g));
            }
            lines.push(match other {
                Action::Rotate { delta } => format!("ROTATE {delta:+}"),
                Action::Move => "MOVE".to_string(),
                Action::Stop => "STOP".to_string(),
                Action::Guess { .. } => unreachable!(),
            });
        }
    }
    format!("```action\n{}\n```", lines.join("\n"))
}

/// One-line summary used in prompt history.
pub fn describe_action(action: &Action) -> String {
    match action {
        Action::Rotate { delta } => format!("ROTATE {delta:+}"),
        Action::Move => "MOVE".into(),
        Action::Stop => "STOP".into(),
        Action::Guess { point, .. } => format!("GUESS {},{}", point.lat(), point.lon()),
    }
}
