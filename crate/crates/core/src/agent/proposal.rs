//! Two-stage location proposal.
//!
//! Stage 1 asks the model for a place in a given continent and difficulty
//! class, answered as `LOCATION <lat>,<lon> "<description>"`. Stage 2 shows
//! a zoom-16 map tile centered there with numbered candidate markers; the
//! model answers `SELECT <n>` or `REJECT` (optionally with a fresh
//! `LOCATION` line). Each marker presentation is one round.

use std::f64::consts::PI;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, ModelBackend, ModelRequest};
use crate::geo::{haversine_km, GeoPoint};
use crate::labels::{Continent, Difficulty};

pub const DEFAULT_ZOOM: u8 = 16;
pub const TILE_SIZE: f64 = 256.0;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("map provider failure: {0}")]
pub struct ProviderError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    /// 1-based, as shown to the model.
    pub index: usize,
    pub point: GeoPoint,
    /// Pixel position on the tile.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTile {
    pub center: GeoPoint,
    pub zoom: u8,
    pub markers: Vec<Marker>,
}

impl MapTile {
    /// Text rendering of the tile for text-only transports.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "satellite tile, zoom {}, centered at {:.5},{:.5}, {}x{} px\n",
            self.zoom,
            self.center.lat(),
            self.center.lon(),
            TILE_SIZE,
            TILE_SIZE
        );
        for m in &self.markers {
            out.push_str(&format!(
                "marker {}: pixel ({:.0}, {:.0}), {:.5},{:.5}\n",
                m.index,
                m.x,
                m.y,
                m.point.lat(),
                m.point.lon()
            ));
        }
        out
    }
}

pub trait MapProvider: Send + Sync {
    fn tile(&self, center: GeoPoint, zoom: u8) -> Result<MapTile, ProviderError>;
}

/// Web-Mercator world pixel coordinates at `zoom`.
pub fn mercator_pixel(p: GeoPoint, zoom: u8) -> (f64, f64) {
    let size = TILE_SIZE * 2f64.powi(zoom as i32);
    let lat = p.lat().clamp(-85.05112878, 85.05112878).to_radians();
    let x = (p.lon() + 180.0) / 360.0 * size;
    let y = (1.0 - (lat.tan() + 1.0 / lat.cos()).ln() / PI) / 2.0 * size;
    (x, y)
}

/// Offers the `k` panorama locations nearest the tile center as markers
/// (ties broken by candidate order). No imagery is fetched.
#[derive(Debug, Clone)]
pub struct StubMapProvider {
    candidates: Vec<GeoPoint>,
    k: usize,
}

impl StubMapProvider {
    pub const DEFAULT_K: usize = 4;

    pub fn new(candidates: Vec<GeoPoint>, k: usize) -> Self {
        Self { candidates, k }
    }
}

impl MapProvider for StubMapProvider {
    fn tile(&self, center: GeoPoint, zoom: u8) -> Result<MapTile, ProviderError> {
        if self.candidates.is_empty() {
            return Err(ProviderError("no candidate locations".into()));
        }
        let mut ranked: Vec<(f64, usize)> =
            self.candidates.iter().enumerate().map(|(i, p)| (haversine_km(center, *p), i)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (cx, cy) = mercator_pixel(center, zoom);
        let markers = ranked
            .iter()
            .take(self.k)
            .enumerate()
            .map(|(i, &(_, c))| {
                let p = self.candidates[c];
                let (x, y) = mercator_pixel(p, zoom);
                Marker { index: i + 1, point: p, x: TILE_SIZE / 2.0 + x - cx, y: TILE_SIZE / 2.0 + y - cy }
            })
            .collect();
        Ok(MapTile { center, zoom, markers })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub max_rounds: usize,
    pub zoom: u8,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self { max_rounds: 5, zoom: DEFAULT_ZOOM }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStage {
    Describe,
    Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalExchange {
    pub round: usize,
    pub stage: ProposalStage,
    pub prompt: String,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<MapTile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub point: GeoPoint,
    pub marker: usize,
    pub rationale: String,
    pub rounds: usize,
    pub transcript: Vec<ProposalExchange>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposalError {
    #[error("no acceptable marker after {rounds} rounds")]
    ProposalFailed { rounds: usize, transcript: Vec<ProposalExchange> },
    #[error("{source}")]
    Provider { source: ProviderError, transcript: Vec<ProposalExchange> },
    #[error("{source}")]
    Backend { source: BackendError, transcript: Vec<ProposalExchange> },
    #[error("could not parse proposal reply: {reply:?}")]
    Parse { reply: String, transcript: Vec<ProposalExchange> },
}

impl ProposalError {
    pub fn transcript(&self) -> &[ProposalExchange] {
        match self {
            ProposalError::ProposalFailed { transcript, .. }
            | ProposalError::Provider { transcript, .. }
            | ProposalError::Backend { transcript, .. }
            | ProposalError::Parse { transcript, .. } => transcript,
        }
    }
}

const NUM: &str = r"[-+]?(?:\d+\.?\d*|\.\d+)";
static LOCATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r#"(?i)\bLOCATION\b\s*:?\s*({NUM})\s*,\s*({NUM})(?:\s+"([^"]*)")?"#)).unwrap()
});
static SELECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bSELECT\b\s*:?\s*#?(\d+)").unwrap());
static REJECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:REJECT|REGENERATE)\b").unwrap());

fn parse_location(text: &str) -> Option<(GeoPoint, String)> {
    let c = LOCATION.captures_iter(text).last()?;
    let p = GeoPoint::new(c[1].parse().ok()?, c[2].parse().ok()?).ok()?;
    Some((p, c.get(3).map(|m| m.as_str().trim().to_string()).unwrap_or_default()))
}

enum Verdict {
    Select(usize),
    Reject,
}

fn parse_verdict(text: &str) -> Option<Verdict> {
    let select = SELECT.captures_iter(text).last().map(|c| (c.get(0).unwrap().start(), c[1].parse::<usize>().ok()));
    let reject = REJECT.find_iter(text).last().map(|m| m.start());
    match (select, reject) {
        (Some((s, Some(n))), Some(r)) if s > r => Some(Verdict::Select(n)),
        (Some((_, Some(n))), None) => Some(Verdict::Select(n)),
        (_, Some(_)) => Some(Verdict::Reject),
        _ => None,
    }
}

fn describe_prompt(continent: Continent, difficulty: Difficulty) -> String {
    format!(
        "Propose a real outdoor street location in {} for a {} geolocation challenge. \
         Easy places have famous landmarks; hard places have few distinctive cues.\n\
         Answer with one line: LOCATION <lat>,<lon> \"<short description>\"",
        continent.name(),
        difficulty
    )
}

fn select_prompt(description: &str, tile: &MapTile) -> String {
    format!(
        "You described: \"{description}\".\n{}\
         If one marker matches your description, answer SELECT <n>. \
         Otherwise answer REJECT, optionally followed by a new LOCATION line.",
        tile.describe()
    )
}

const SYSTEM: &str = "You help build a geolocation benchmark by choosing street-level locations.";

/// Runs the describe/select negotiation until a marker is accepted or
/// `config.max_rounds` tiles have been rejected.
pub fn propose_location(
    backend: &mut dyn ModelBackend,
    provider: &dyn MapProvider,
    continent: Continent,
    difficulty: Difficulty,
    config: &ProposalConfig,
) -> Result<Proposal, ProposalError> {
    let mut transcript = Vec::new();
    let mut ask = |transcript: &mut Vec<ProposalExchange>,
                   round: usize,
                   stage: ProposalStage,
                   prompt: String,
                   tile: Option<MapTile>|
     -> Result<String, ProposalError> {
        let req = ModelRequest { system: SYSTEM, prompt: &prompt, image: None, final_turn: false };
        match backend.complete(&req) {
            Ok(reply) => {
                transcript.push(ProposalExchange { round, stage, prompt, reply: reply.clone(), tile });
                Ok(reply)
            }
            Err(source) => Err(ProposalError::Backend { source, transcript: transcript.clone() }),
        }
    };

    let mut pending: Option<(GeoPoint, String)> = None;
    for round in 1..=config.max_rounds {
        let (center, description) = match pending.take() {
            Some(p) => p,
            None => {
                let reply =
                    ask(&mut transcript, round, ProposalStage::Describe, describe_prompt(continent, difficulty), None)?;
                parse_location(&reply).ok_or_else(|| ProposalError::Parse { reply, transcript: transcript.clone() })?
            }
        };
        let tile = provider
            .tile(center, config.zoom)
            .map_err(|source| ProposalError::Provider { source, transcript: transcript.clone() })?;
        let reply =
            ask(&mut transcript, round, ProposalStage::Select, select_prompt(&description, &tile), Some(tile.clone()))?;
        match parse_verdict(&reply) {
            Some(Verdict::Select(n)) => {
                if let Some(m) = tile.markers.iter().find(|m| m.index == n) {
                    return Ok(Proposal {
                        point: m.point,
                        marker: n,
                        rationale: description,
                        rounds: round,
                        transcript,
                    });
                }
            }
            Some(Verdict::Reject) => pending = parse_location(&reply),
            None => {}
        }
    }
    Err(ProposalError::ProposalFailed { rounds: config.max_rounds, transcript })
}
