//! Embodied image-geolocation toolkit: navigation graphs over street-level
//! panoramas, an agent environment, a reason-then-act agent loop, and the
//! scoring, diversity, trend and consensus analyses run over its outputs.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod consensus;
pub mod diversity;
pub mod env;
pub mod geo;
pub mod graph;
pub mod labels;
pub mod stats;

pub use agent::{run_episode, EpisodeConfig, EpisodeTrace, ModelBackend, PromptTemplates};
pub use consensus::{aggregate_consensus, ConsensusConfig, PolarHistogram};
pub use diversity::{diversity_report, DiversityReport, PointSet2D};
pub use env::{Action, EnvConfig, EnvState, Environment, Observation};
pub use geo::{geo_score, haversine_km, GeoPoint};
pub use graph::{graph_stats, GraphStats, NavGraph};
pub use labels::{Continent, Difficulty, Level, LevelMetrics, PlaceLabels};
pub use stats::{trend_report, GroupedScores, TrendConfig, TrendReport};
