//! The embodied environment: position on a navigation graph plus a view heading.
//!
//! [`Environment::step`] is a pure transition function over [`EnvState`]; the
//! environment itself holds only shared, read-only data, so independent
//! episodes can step concurrently against the same graph and panorama source.

mod pano;
mod render;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{angular_difference, bearing_deg, wrap_degrees, GeoPoint};
use crate::graph::NavGraph;
use crate::labels::PlaceLabels;

pub use pano::{NoPanoramas, PanoSource, PanoStore, SyntheticPanoramas};
pub use render::{
    center_source_coords, decode_bearing, render_view, synthetic_panorama, FloatImage, RenderError, ViewParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("state belongs to graph {state:?}, environment hosts {env:?}")]
    WrongGraph { state: String, env: String },
    #[error("episode already terminated")]
    Terminal,
    #[error("rotation {0} outside (-360, 360)")]
    InvalidRotation(f64),
    #[error("panorama unavailable: {0}")]
    Panorama(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Action {
    /// Positive deltas turn clockwise (to the right).
    Rotate {
        delta: f64,
    },
    /// Follow the graph edge best aligned with the current heading.
    Move,
    Guess {
        point: GeoPoint,
        labels: PlaceLabels,
    },
    Stop,
}

impl Action {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Action::Guess { .. } | Action::Stop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub graph_id: String,
    pub node: String,
    /// Absolute compass heading, `[0, 360)`.
    pub heading: f64,
    pub turn: u32,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewMode {
    /// Rectilinear crop centered on the current heading.
    #[default]
    Crop,
    /// The full equirectangular panorama.
    Panorama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub fov: f64,
    pub width: u32,
    pub height: u32,
    pub pitch: f64,
    pub move_tolerance: f64,
    pub view_mode: ViewMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { fov: 90.0, width: 512, height: 512, pitch: 0.0, move_tolerance: 45.0, view_mode: ViewMode::Crop }
    }
}

/// A traversable link as the agent sees it: direction relative to the
/// current heading, plus edge length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkHint {
    pub relative_bearing: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum View {
    Rendered {
        fov: f64,
        width: u32,
        height: u32,
        yaw: f64,
        pitch: f64,
        hash: String,
        #[serde(skip)]
        image: Option<Arc<FloatImage>>,
    },
    Panorama {
        width: u32,
        height: u32,
        /// Compass bearing of the panorama's center column relative to the agent heading.
        center_offset: f64,
        hash: String,
        #[serde(skip)]
        image: Option<Arc<FloatImage>>,
    },
    /// Emitted when no imagery exists for the node.
    Descriptor { fov: f64, width: u32, height: u32, hash: String },
}

impl View {
    pub fn hash(&self) -> &str {
        match self {
            View::Rendered { hash, .. } | View::Panorama { hash, .. } | View::Descriptor { hash, .. } => hash,
        }
    }

    pub fn image(&self) -> Option<&FloatImage> {
        match self {
            View::Rendered { image, .. } | View::Panorama { image, .. } => image.as_deref(),
            View::Descriptor { .. } => None,
        }
    }
}

/// What the agent is shown. Deliberately free of node ids, coordinates and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub turn: u32,
    pub heading: f64,
    pub node_degree: usize,
    pub links: Vec<LinkHint>,
    pub view: View,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepOutcome {
    Rotated {
        heading: f64,
    },
    Moved {
        from: String,
        to: String,
        length_m: f64,
    },
    /// No neighbor within the move tolerance; the node is unchanged but the turn is spent.
    NoNavigablePath,
    Terminated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: EnvState,
    /// `None` once the episode has terminated.
    pub observation: Option<Observation>,
    pub outcome: StepOutcome,
}

/// Neighbor whose initial bearing is closest to `heading`, within `tolerance`
/// degrees. Ties go to the smaller node id.
pub fn resolve_move<'g>(graph: &'g NavGraph, node: &str, heading: f64, tolerance: f64) -> Option<&'g str> {
    let here = graph.node(node)?;
    graph
        .neighbors(node)
        .ok()?
        .filter_map(|n| {
            let b = bearing_deg(here.location, n.location).ok()?;
            let diff = angular_difference(b, heading);
            (diff <= tolerance).then_some((diff, n.id.as_str()))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
}

pub struct Environment<'g> {
    graph: &'g NavGraph,
    panos: &'g dyn PanoSource,
    config: EnvConfig,
}

impl<'g> Environment<'g> {
    pub fn new(graph: &'g NavGraph, panos: &'g dyn PanoSource, config: EnvConfig) -> Self {
        Self { graph, panos, config }
    }

    pub fn graph(&self) -> &'g NavGraph {
        self.graph
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reset(&self, start: Option<&str>, heading: f64) -> Result<(EnvState, Observation), EnvError> {
        let node = match start {
            Some(id) => self.graph.node(id).ok_or_else(|| EnvError::UnknownNode(id.to_string()))?,
            None => self.graph.start_node(),
        };
        let state = EnvState {
            graph_id: self.graph.graph_id().to_string(),
            node: node.id.clone(),
            heading: wrap_degrees(heading),
            turn: 0,
            terminal: false,
        };
        let obs = self.observe(&state)?;
        Ok((state, obs))
    }

    pub fn step(&self, state: &EnvState, action: &Action) -> Result<Step, EnvError> {
        if state.terminal {
            return Err(EnvError::Terminal);
        }
        if state.graph_id != self.graph.graph_id() {
            return Err(EnvError::WrongGraph { state: state.graph_id.clone(), env: self.graph.graph_id().to_string() });
        }
        if self.graph.node(&state.node).is_none() {
            return Err(EnvError::UnknownNode(state.node.clone()));
        }
        let mut next = EnvState { turn: state.turn + 1, ..state.clone() };
        let outcome = match action {
            Action::Rotate { delta } => {
                if !(delta.abs() < 360.0) {
                    return Err(EnvError::InvalidRotation(*delta));
                }
                next.heading = wrap_degrees(state.heading + delta);
                StepOutcome::Rotated { heading: next.heading }
            }
            Action::Move => match resolve_move(self.graph, &state.node, state.heading, self.config.move_tolerance) {
                Some(to) => {
                    let length_m = self.graph.edge_between(&state.node, to).map(|e| e.length_m).unwrap_or_default();
                    next.node = to.to_string();
                    StepOutcome::Moved { from: state.node.clone(), to: to.to_string(), length_m }
                }
                None => StepOutcome::NoNavigablePath,
            },
            Action::Guess { .. } | Action::Stop => {
                next.terminal = true;
                StepOutcome::Terminated
            }
        };
        let observation = if next.terminal { None } else { Some(self.observe(&next)?) };
        Ok(Step { state: next, observation, outcome })
    }

    /// Deterministic observation for `(node, heading)`.
    pub fn observe(&self, state: &EnvState) -> Result<Observation, EnvError> {
        let node = self.graph.node(&state.node).ok_or_else(|| EnvError::UnknownNode(state.node.clone()))?;
        let mut links: Vec<LinkHint> = self
            .graph
            .neighbors(&node.id)
            .map_err(|_| EnvError::UnknownNode(node.id.clone()))?
            .filter_map(|n| {
                let b = bearing_deg(node.location, n.location).ok()?;
                let length_m = self.graph.edge_between(&node.id, &n.id)?.length_m;
                Some(LinkHint { relative_bearing: wrap_degrees(b - state.heading), length_m })
            })
            .collect();
        links.sort_by(|a, b| a.relative_bearing.total_cmp(&b.relative_bearing));

        let cfg = &self.config;
        let view = match (self.panos.panorama(node)?, cfg.view_mode) {
            (Some(pano), ViewMode::Crop) => {
                let yaw = wrap_degrees(state.heading - node.heading_ref);
                let params = ViewParams { yaw, pitch: cfg.pitch, fov: cfg.fov, width: cfg.width, height: cfg.height };
                let img = render_view(&pano, &params)?;
                View::Rendered {
                    fov: cfg.fov,
                    width: cfg.width,
                    height: cfg.height,
                    yaw,
                    pitch: cfg.pitch,
                    hash: img.content_hash(),
                    image: Some(Arc::new(img)),
                }
            }
            (Some(pano), ViewMode::Panorama) => View::Panorama {
                width: pano.width(),
                height: pano.height(),
                center_offset: wrap_degrees(node.heading_ref - state.heading),
                hash: pano.content_hash(),
                image: Some(pano),
            },
            (None, _) => {
                let mut h = Sha256::new();
                h.update(format!("{}|{}|{}|{}|{}", node.id, state.heading, cfg.fov, cfg.width, cfg.height));
                View::Descriptor { fov: cfg.fov, width: cfg.width, height: cfg.height, hash: hex::encode(h.finalize()) }
            }
        };
        Ok(Observation { turn: state.turn, heading: state.heading, node_degree: links.len(), links, view })
    }
}
