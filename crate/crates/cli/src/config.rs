//! Run configuration: TOML on disk, overridable from the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use geonav_core::agent::{ImageTransport, PromptTemplates};
use geonav_core::consensus::ConsensusConfig;
use geonav_core::diversity::DEFAULT_GRID;
use geonav_core::env::ViewMode;
use geonav_core::graph::DEFAULT_MIN_DEPTH;
use geonav_core::stats::TrendConfig;
use geonav_core::EnvConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Which model answers the agent prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    /// Answers with the ground truth after `explore_turns` rotations.
    Oracle {
        #[serde(default)]
        explore_turns: usize,
    },
    /// Fixed replies; the last one repeats.
    Scripted {
        #[serde(default = "scripted_name")]
        name: String,
        replies: Vec<String>,
    },
    /// Recorded replies keyed by episode.
    Replay { file: PathBuf },
    /// An OpenAI-compatible chat-completions endpoint.
    Chat {
        model: String,
        /// Overrides the endpoint from the environment.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
        #[serde(default)]
        images: ImageTransport,
        #[serde(default = "chat_timeout")]
        timeout_secs: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log: Option<PathBuf>,
    },
}

fn scripted_name() -> String {
    "scripted".into()
}

fn chat_timeout() -> u64 {
    120
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Oracle { explore_turns: 0 }
    }
}

/// `oracle[:turns]`, `scripted:<reply>`, `replay:<file>` or `chat:<model>[@<endpoint>]`.
impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
        match (kind.trim().to_ascii_lowercase().as_str(), arg) {
            ("oracle", None) => Ok(BackendSpec::Oracle { explore_turns: 0 }),
            ("oracle", Some(n)) => n
                .trim()
                .parse()
                .map(|explore_turns| BackendSpec::Oracle { explore_turns })
                .map_err(|_| format!("oracle explore turns must be an integer, got {n:?}")),
            ("scripted", Some(reply)) => {
                Ok(BackendSpec::Scripted { name: scripted_name(), replies: vec![reply.to_string()] })
            }
            ("replay", Some(file)) if !file.is_empty() => Ok(BackendSpec::Replay { file: file.into() }),
            ("chat", Some(rest)) if !rest.is_empty() => {
                let (model, endpoint) = rest.split_once('@').map_or((rest, None), |(m, e)| (m, Some(e.to_string())));
                Ok(BackendSpec::Chat {
                    model: model.to_string(),
                    endpoint,
                    images: ImageTransport::default(),
                    timeout_secs: chat_timeout(),
                    log: None,
                })
            }
            _ => Err(format!(
                "unknown backend {s:?}; expected oracle[:turns], scripted:<reply>, replay:<file> or chat:<model>[@<endpoint>]"
            )),
        }
    }
}

/// One ordered evaluation condition and the environment settings it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageLevel {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turns: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_mode: Option<ViewMode>,
}

impl CoverageLevel {
    pub fn named(label: impl Into<String>) -> Self {
        Self { label: label.into(), max_turns: None, fov: None, view_mode: None }
    }
}

/// Where panorama pixels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PanoSpec {
    /// Bearing-encoding gradients generated per node.
    Synthetic { width: u32 },
    /// Image files under `dir`, addressed by each node's `image`; relative to the dataset.
    Store { dir: PathBuf },
    /// Text descriptors only.
    None,
}

impl Default for PanoSpec {
    fn default() -> Self {
        PanoSpec::Synthetic { width: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub backend: BackendSpec,
    pub max_turns: u32,
    pub fov: f64,
    pub view_width: u32,
    pub view_height: u32,
    pub parallelism: usize,
    pub seed: u64,
    /// Draw each episode's start heading from the seed; otherwise face north.
    pub random_heading: bool,
    pub coverage_levels: Vec<CoverageLevel>,
    pub min_depth: usize,
    pub stop_on_confidence: Option<f64>,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub panoramas: PanoSpec,
    pub diversity_grid: usize,
    pub prompts: PromptTemplates,
    pub trend: TrendConfig,
    pub consensus: ConsensusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            dataset_dir: PathBuf::from("dataset"),
            output_dir: PathBuf::from("out"),
            backend: BackendSpec::default(),
            max_turns: 10,
            fov: env.fov,
            view_width: env.width,
            view_height: env.height,
            parallelism: 1,
            seed: 0,
            random_heading: true,
            coverage_levels: vec![CoverageLevel::named("default")],
            min_depth: DEFAULT_MIN_DEPTH,
            stop_on_confidence: None,
            max_retries: 3,
            retry_backoff_ms: 250,
            panoramas: PanoSpec::default(),
            diversity_grid: DEFAULT_GRID,
            prompts: PromptTemplates::default(),
            trend: TrendConfig::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file. Relative dataset and backend paths are taken
    /// relative to the file's directory; `output_dir` stays relative to the
    /// working directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let mut cfg =
            Self::from_toml(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.dataset_dir);
        match &mut cfg.backend {
            BackendSpec::Replay { file } => rebase(file),
            BackendSpec::Chat { log: Some(log), .. } => rebase(log),
            _ => {}
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config always serializes")
    }

    pub fn check(&self) -> Result<(), String> {
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        if self.coverage_levels.is_empty() {
            return Err("at least one coverage level is required".into());
        }
        for (i, level) in self.coverage_levels.iter().enumerate() {
            if level.label.trim().is_empty() {
                return Err(format!("coverage level {i} has an empty label"));
            }
            if self.coverage_levels[..i].iter().any(|l| l.label == level.label) {
                return Err(format!("coverage level {:?} is listed twice", level.label));
            }
            let fov = level.fov.unwrap_or(self.fov);
            if !(fov > 0.0 && fov <= 120.0) {
                return Err(format!("coverage level {:?}: fov {fov} outside (0, 120]", level.label));
            }
        }
        // numeric labels ("20%", "50%") must increase
        let values: Option<Vec<f64>> = self
            .coverage_levels
            .iter()
            .map(|l| l.label.trim().trim_end_matches('%').trim().parse::<f64>().ok())
            .collect();
        if let Some(v) = values {
            if v.windows(2).any(|w| !(w[0] < w[1])) {
                return Err("numeric coverage levels must be strictly increasing".into());
            }
        }
        if self.view_width == 0 || self.view_height == 0 {
            return Err("view size must be positive".into());
        }
        if self.diversity_grid == 0 {
            return Err("diversity grid must be at least 1".into());
        }
        if let PanoSpec::Synthetic { width } = self.panoramas {
            if width < 2 || width % 2 != 0 {
                return Err(format!("synthetic panorama width {width} must be even and at least 2"));
            }
        }
        Ok(())
    }

    pub fn env_for(&self, level: &CoverageLevel) -> EnvConfig {
        EnvConfig {
            fov: level.fov.unwrap_or(self.fov),
            width: self.view_width,
            height: self.view_height,
            view_mode: level.view_mode.unwrap_or_default(),
            ..EnvConfig::default()
        }
    }

    /// Start heading for one episode. Depends only on the seed and the
    /// episode key, so scheduling order cannot change it.
    pub fn start_heading(&self, graph_id: &str, level: &str) -> f64 {
        if !self.random_heading {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a(format!("{graph_id}@{level}").as_bytes()));
        rng.gen_range(0.0..360.0)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
