//! Evaluation runs: one episode per (graph, coverage level), traces on disk,
//! aggregate metrics in a report.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use geonav_core::agent::{ChatBackend, ChatConfig, OracleBackend, ReplayLog, ScriptedBackend};
use geonav_core::env::{NoPanoramas, PanoSource, PanoStore, SyntheticPanoramas};
use geonav_core::geo::aggregate_scores;
use geonav_core::labels::level_metrics;
use geonav_core::{
    run_episode, EpisodeConfig, EpisodeTrace, Level, LevelMetrics, ModelBackend, PlaceLabels, TrendReport,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BackendSpec, CoverageLevel, PanoSpec, RunConfig};
use crate::dataset::{load_dataset, Dataset, DatasetGraph};
use crate::output::{write_atomic, write_csv, write_json};
use crate::tables::{diversity_rows, trend_table, DiversityRow, ModelPoint, ScoreRow};
use crate::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const LEVELS_CSV: &str = "levels.csv";
pub const SCORES_CSV: &str = "scores.csv";
pub const TRACE_DIR: &str = "traces";
pub const TRACE_INDEX: &str = "index.jsonl";

/// Label used for dataset entries without a recorded proposer.
const UNKNOWN_PROPOSER: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub scored: usize,
    pub mean_distance_km: Option<f64>,
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub label: String,
    pub episodes: usize,
    pub failed: usize,
    pub null_guesses: usize,
    pub scores: ScoreStats,
    pub country: Option<LevelMetrics>,
    pub city: Option<LevelMetrics>,
    pub street: Option<LevelMetrics>,
}

/// Everything one evaluation run produced. Failed episodes and episodes that
/// ended without a guess are counted here but excluded from the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub seed: u64,
    pub episodes: usize,
    pub failed: usize,
    pub null_guesses: usize,
    pub overall: ScoreStats,
    pub levels: Vec<LevelReport>,
    /// Start locations grouped by proposing model and continent.
    pub diversity: Vec<DiversityRow>,
    /// Score trend across coverage levels, when there are at least two.
    pub trend: Option<TrendReport>,
}

/// One line of `traces/index.jsonl` and one row of `episodes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub graph_id: String,
    pub level: String,
    pub backend: String,
    pub start_heading: f64,
    pub turns: usize,
    pub termination: Option<String>,
    pub distance_km: Option<f64>,
    pub score: Option<f64>,
    pub failed: bool,
    pub error: Option<String>,
    pub trace: Option<String>,
}

#[derive(Debug)]
pub struct EpisodeResult {
    pub record: EpisodeRecord,
    pub trace: Option<EpisodeTrace>,
    pub truth: PlaceLabels,
}

#[derive(Debug)]
pub struct EvalOutput {
    pub report: BenchReport,
    pub episodes: Vec<EpisodeResult>,
    pub output_dir: PathBuf,
}

/// Shared, read-only state for building per-episode backends.
enum BackendFactory {
    Oracle(usize),
    Scripted(String, Vec<String>),
    Replay(ReplayLog),
    Chat(ChatBackend),
}

impl BackendFactory {
    fn new(spec: &BackendSpec) -> Result<Self, CliError> {
        Ok(match spec {
            BackendSpec::Oracle { explore_turns } => BackendFactory::Oracle(*explore_turns),
            BackendSpec::Scripted { name, replies } => {
                if replies.is_empty() {
                    return Err(CliError::Validation("scripted backend needs at least one reply".into()));
                }
                BackendFactory::Scripted(name.clone(), replies.clone())
            }
            BackendSpec::Replay { file } => {
                BackendFactory::Replay(ReplayLog::load(file).map_err(|e| CliError::Validation(e.to_string()))?)
            }
            BackendSpec::Chat { model, endpoint, images, timeout_secs, log } => {
                let mut cfg = match (endpoint, ChatConfig::from_env(model.clone())) {
                    (Some(ep), Some(env)) => ChatConfig { endpoint: ep.clone(), ..env },
                    (Some(ep), None) => {
                        let mut c = ChatConfig::new(ep.clone(), model.clone());
                        c.api_key = std::env::var(geonav_core::agent::API_KEY_VAR).ok();
                        c
                    }
                    (None, Some(env)) => env,
                    (None, None) => {
                        return Err(CliError::Validation(format!(
                            "chat backend needs an endpoint: set {} or pass chat:<model>@<endpoint>",
                            geonav_core::agent::API_BASE_VAR
                        )))
                    }
                };
                cfg.images = images.clone();
                cfg.timeout_secs = *timeout_secs;
                cfg.log_path = log.clone();
                BackendFactory::Chat(ChatBackend::new(cfg).map_err(|e| CliError::Validation(e.to_string()))?)
            }
        })
    }

    fn name(&self) -> String {
        match self {
            BackendFactory::Oracle(_) => "oracle".into(),
            BackendFactory::Scripted(name, _) => name.clone(),
            BackendFactory::Replay(_) => "replay".into(),
            BackendFactory::Chat(b) => b.name().to_string(),
        }
    }

    fn build(&self, g: &DatasetGraph, level: &str) -> Result<Box<dyn ModelBackend>, String> {
        Ok(match self {
            BackendFactory::Oracle(turns) => {
                let start = g.graph.start_node();
                Box::new(OracleBackend::new(start.location, start.labels.clone(), *turns))
            }
            BackendFactory::Scripted(name, replies) => Box::new(ScriptedBackend::named(name.clone(), replies.clone())),
            BackendFactory::Replay(log) => Box::new(
                log.backend_for(g.graph.graph_id(), level)
                    .ok_or_else(|| format!("no replay recorded for {}@{level}", g.graph.graph_id()))?,
            ),
            BackendFactory::Chat(b) => Box::new(b.clone()),
        })
    }
}

fn pano_source(spec: &PanoSpec, dataset_dir: &Path) -> Box<dyn PanoSource> {
    match spec {
        PanoSpec::Synthetic { width } => Box::new(SyntheticPanoramas::new(*width)),
        PanoSpec::Store { dir } => Box::new(PanoStore::new(dataset_dir.join(dir))),
        PanoSpec::None => Box::new(NoPanoramas),
    }
}

/// Keeps ids readable in file names without risking collisions: the episode
/// index prefix already makes every name unique.
fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn trace_name(episode: usize, graph_id: &str, level: &str) -> String {
    format!("{episode:04}_{}_{}.json", file_safe(graph_id), file_safe(level))
}

fn run_one(
    cfg: &RunConfig,
    factory: &BackendFactory,
    panos: &dyn PanoSource,
    episode: usize,
    g: &DatasetGraph,
    level: &CoverageLevel,
) -> EpisodeResult {
    let graph_id = g.graph.graph_id();
    let start_heading = cfg.start_heading(graph_id, &level.label);
    let ep_cfg = EpisodeConfig {
        max_turns: level.max_turns.unwrap_or(cfg.max_turns),
        stop_on_confidence: cfg.stop_on_confidence,
        max_retries: cfg.max_retries,
        retry_backoff_ms: cfg.retry_backoff_ms,
        reprompt_on_parse_error: true,
        start_heading,
        env: cfg.env_for(level),
    };
    let mut record = EpisodeRecord {
        episode,
        graph_id: graph_id.to_string(),
        level: level.label.clone(),
        backend: factory.name(),
        start_heading,
        turns: 0,
        termination: None,
        distance_km: None,
        score: None,
        failed: true,
        error: None,
        trace: None,
    };
    let truth = g.graph.start_node().labels.clone();
    let outcome = factory.build(g, &level.label).and_then(|mut backend| {
        run_episode(&g.graph, panos, backend.as_mut(), &ep_cfg, &cfg.prompts).map_err(|e| e.to_string())
    });
    match outcome {
        Ok(trace) => {
            record.turns = trace.turns.len();
            record.termination =
                serde_json::to_value(trace.termination).ok().and_then(|v| v.as_str().map(String::from));
            record.distance_km = trace.distance_km;
            record.score = trace.score;
            record.failed = false;
            record.backend = trace.backend.clone();
            record.trace = Some(format!("{TRACE_DIR}/{}", trace_name(episode, graph_id, &level.label)));
            EpisodeResult { record, trace: Some(trace), truth }
        }
        Err(e) => {
            tracing::warn!(graph = graph_id, level = level.label.as_str(), "episode failed: {e}");
            record.error = Some(e);
            EpisodeResult { record, trace: None, truth }
        }
    }
}

/// Runs every (graph, level) episode on a pool of `cfg.parallelism` workers
/// and returns the backend name with the results. Results come back in job
/// order, so the output is independent of scheduling.
pub fn run_episodes(cfg: &RunConfig, dataset: &Dataset) -> Result<(String, Vec<EpisodeResult>), CliError> {
    let factory = BackendFactory::new(&cfg.backend)?;
    let panos = pano_source(&cfg.panoramas, &dataset.dir);
    let jobs: Vec<(&DatasetGraph, &CoverageLevel)> =
        dataset.graphs.iter().flat_map(|g| cfg.coverage_levels.iter().map(move |l| (g, l))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build().context("building worker pool")?;
    let results = pool.install(|| {
        jobs.par_iter().enumerate().map(|(i, (g, level))| run_one(cfg, &factory, panos.as_ref(), i, g, level)).collect()
    });
    Ok((factory.name(), results))
}

fn score_stats(results: &[&EpisodeResult]) -> ScoreStats {
    let distances: Vec<f64> = results.iter().filter_map(|r| r.record.distance_km).collect();
    match aggregate_scores(&distances) {
        Ok(s) => ScoreStats { scored: s.n, mean_distance_km: Some(s.mean_distance_km), mean_score: Some(s.mean_score) },
        Err(_) => ScoreStats { scored: 0, mean_distance_km: None, mean_score: None },
    }
}

fn label_metrics(results: &[&EpisodeResult], level: Level) -> Option<LevelMetrics> {
    let done: Vec<&&EpisodeResult> = results.iter().filter(|r| r.trace.is_some()).collect();
    let pred: Vec<PlaceLabels> =
        done.iter().map(|r| r.trace.as_ref().and_then(|t| t.predicted_labels()).cloned().unwrap_or_default()).collect();
    let truth: Vec<PlaceLabels> = done.iter().map(|r| r.truth.clone()).collect();
    level_metrics(&pred, &truth, level).ok()
}

fn is_null_guess(r: &EpisodeResult) -> bool {
    r.trace.as_ref().is_some_and(|t| t.final_guess.is_none())
}

pub fn build_report(cfg: &RunConfig, dataset: &Dataset, results: &[EpisodeResult], model: &str) -> BenchReport {
    let all: Vec<&EpisodeResult> = results.iter().collect();
    let levels = cfg
        .coverage_levels
        .iter()
        .map(|l| {
            let rs: Vec<&EpisodeResult> = results.iter().filter(|r| r.record.level == l.label).collect();
            LevelReport {
                label: l.label.clone(),
                episodes: rs.len(),
                failed: rs.iter().filter(|r| r.record.failed).count(),
                null_guesses: rs.iter().filter(|r| is_null_guess(r)).count(),
                scores: score_stats(&rs),
                country: label_metrics(&rs, Level::Country),
                city: label_metrics(&rs, Level::City),
                street: label_metrics(&rs, Level::Street),
            }
        })
        .collect();

    let points: Vec<ModelPoint> = dataset
        .graphs
        .iter()
        .map(|g| ModelPoint {
            model: g.entry.proposed_by.clone().unwrap_or_else(|| UNKNOWN_PROPOSER.into()),
            continent: g.graph.meta().continent,
            point: g.graph.start_node().location,
        })
        .collect();
    let diversity = diversity_rows(&points, cfg.diversity_grid).unwrap_or_default();

    let trend = (cfg.coverage_levels.len() >= 2)
        .then(|| trend_table(&score_rows(results, model), &cfg.trend).models.into_iter().next())
        .flatten()
        .map(|m| m.report);

    BenchReport {
        model: model.to_string(),
        seed: cfg.seed,
        episodes: results.len(),
        failed: results.iter().filter(|r| r.record.failed).count(),
        null_guesses: results.iter().filter(|r| is_null_guess(r)).count(),
        overall: score_stats(&all),
        levels,
        diversity,
        trend,
    }
}

fn score_rows(results: &[EpisodeResult], model: &str) -> Vec<ScoreRow> {
    results
        .iter()
        .filter_map(|r| {
            r.record.score.map(|score| ScoreRow { model: model.into(), level: r.record.level.clone(), score })
        })
        .collect()
}

/// One row of `levels.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: String,
    pub episodes: usize,
    pub failed: usize,
    pub null_guesses: usize,
    pub scored: usize,
    pub mean_distance_km: Option<f64>,
    pub mean_score: Option<f64>,
    pub country_acc: Option<f64>,
    pub country_f1: Option<f64>,
    pub city_acc: Option<f64>,
    pub city_f1: Option<f64>,
    pub street_acc: Option<f64>,
    pub street_f1: Option<f64>,
}

/// Writes the report, tables and traces, and removes trace files left over
/// from earlier runs so the index accounts for every file in `traces/`.
pub fn write_outputs(out: &Path, report: &BenchReport, results: &[EpisodeResult]) -> anyhow::Result<()> {
    let trace_dir = out.join(TRACE_DIR);
    std::fs::create_dir_all(&trace_dir).with_context(|| format!("creating {}", trace_dir.display()))?;
    let mut index = String::new();
    let mut keep = BTreeSet::new();
    keep.insert(TRACE_INDEX.to_string());
    for r in results {
        if let (Some(trace), Some(rel)) = (&r.trace, &r.record.trace) {
            let path = out.join(rel);
            write_json(&path, trace)?;
            keep.insert(path.file_name().expect("trace path has a file name").to_string_lossy().into_owned());
        }
        index.push_str(&serde_json::to_string(&r.record)?);
        index.push('\n');
    }
    write_atomic(&trace_dir.join(TRACE_INDEX), index.as_bytes())?;
    for entry in std::fs::read_dir(&trace_dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name.ends_with(".json") && !keep.contains(&name) {
            std::fs::remove_file(entry.path())?;
        }
    }

    let records: Vec<&EpisodeRecord> = results.iter().map(|r| &r.record).collect();
    write_csv(&out.join(EPISODES_CSV), &records)?;
    let level_rows: Vec<LevelRow> = report
        .levels
        .iter()
        .map(|l| LevelRow {
            level: l.label.clone(),
            episodes: l.episodes,
            failed: l.failed,
            null_guesses: l.null_guesses,
            scored: l.scores.scored,
            mean_distance_km: l.scores.mean_distance_km,
            mean_score: l.scores.mean_score,
            country_acc: l.country.map(|m| m.accuracy),
            country_f1: l.country.map(|m| m.f1),
            city_acc: l.city.map(|m| m.accuracy),
            city_f1: l.city.map(|m| m.f1),
            street_acc: l.street.map(|m| m.accuracy),
            street_f1: l.street.map(|m| m.f1),
        })
        .collect();
    write_csv(&out.join(LEVELS_CSV), &level_rows)?;
    write_csv(&out.join(SCORES_CSV), &score_rows(results, &report.model))?;
    write_json(&out.join(REPORT_JSON), report)?;
    Ok(())
}

/// Loads and validates the dataset, runs all episodes and writes the outputs.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutput, CliError> {
    cfg.check().map_err(CliError::Validation)?;
    let dataset = load_dataset(&cfg.dataset_dir, cfg.min_depth)?;
    let (model, results) = run_episodes(cfg, &dataset)?;
    let report = build_report(cfg, &dataset, &results, &model);
    write_outputs(&cfg.output_dir, &report, &results)?;
    Ok(EvalOutput { report, episodes: results, output_dir: cfg.output_dir.clone() })
}
