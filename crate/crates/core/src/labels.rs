//! Place labels and street/city/country classification metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("unknown continent {0:?}")]
    UnknownContinent(String),
    #[error("unknown difficulty {0:?}")]
    UnknownDifficulty(String),
    #[error("unknown label level {0:?}")]
    UnknownLevel(String),
    #[error("prediction/truth length mismatch: {pred} vs {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("ground truth sample {index} has no {level} label")]
    MissingTruth { index: usize, level: Level },
    #[error("no samples")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Continent {
    Africa,
    Asia,
    Europe,
    NorthAmerica,
    SouthAmerica,
    Oceania,
}

impl Continent {
    pub const ALL: [Continent; 6] = [
        Continent::Africa,
        Continent::Asia,
        Continent::Europe,
        Continent::NorthAmerica,
        Continent::SouthAmerica,
        Continent::Oceania,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Continent::Africa => "AF",
            Continent::Asia => "AS",
            Continent::Europe => "EU",
            Continent::NorthAmerica => "NA",
            Continent::SouthAmerica => "SA",
            Continent::Oceania => "OC",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Continent::Africa => "Africa",
            Continent::Asia => "Asia",
            Continent::Europe => "Europe",
            Continent::NorthAmerica => "North America",
            Continent::SouthAmerica => "South America",
            Continent::Oceania => "Oceania",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Continent {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, LabelError> {
        let key: String = normalize_label(s).chars().filter(|c| c.is_alphanumeric()).collect();
        Ok(match key.as_str() {
            "af" | "africa" => Continent::Africa,
            "as" | "asia" => Continent::Asia,
            "eu" | "europe" => Continent::Europe,
            "na" | "northamerica" => Continent::NorthAmerica,
            "sa" | "southamerica" => Continent::SouthAmerica,
            "oc" | "oceania" | "australia" => Continent::Oceania,
            _ => return Err(LabelError::UnknownContinent(s.to_string())),
        })
    }
}

impl TryFrom<String> for Continent {
    type Error = LabelError;
    fn try_from(s: String) -> Result<Self, LabelError> {
        s.parse()
    }
}

impl From<Continent> for String {
    fn from(c: Continent) -> String {
        c.code().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl FromStr for Difficulty {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, LabelError> {
        match normalize_label(s).as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(LabelError::UnknownDifficulty(s.to_string())),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        })
    }
}

/// Lowercases, trims, collapses interior whitespace and strips diacritics.
pub fn normalize_label(raw: &str) -> String {
    let folded: String = raw.nfd().filter(|c| !is_combining_mark(*c)).collect();
    folded.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_opt(raw: Option<String>) -> Option<String> {
    raw.map(|s| normalize_label(&s)).filter(|s| !s.is_empty())
}

/// Hierarchical place labels. Dataset records always carry `country` and
/// `continent`; model predictions may leave any level empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub street: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continent: Option<Continent>,
}

impl PlaceLabels {
    /// Builds labels with every string level normalized; empty strings become `None`.
    pub fn new(
        street: Option<String>,
        city: Option<String>,
        country: Option<String>,
        continent: Option<Continent>,
    ) -> Self {
        Self { street: normalize_opt(street), city: normalize_opt(city), country: normalize_opt(country), continent }
    }

    pub fn normalized(self) -> Self {
        Self::new(self.street, self.city, self.country, self.continent)
    }

    pub fn level(&self, level: Level) -> Option<&str> {
        match level {
            Level::Street => self.street.as_deref(),
            Level::City => self.city.as_deref(),
            Level::Country => self.country.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Street,
    City,
    Country,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Street, Level::City, Level::Country];
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Street => "street",
            Level::City => "city",
            Level::Country => "country",
        })
    }
}

impl FromStr for Level {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, LabelError> {
        match normalize_label(s).as_str() {
            "street" => Ok(Level::Street),
            "city" => Ok(Level::City),
            "country" => Ok(Level::Country),
            _ => Err(LabelError::UnknownLevel(s.to_string())),
        }
    }
}

/// Classification metrics at one label level.
///
/// `accuracy` is the micro fraction of exact matches. `precision`, `recall`
/// and `f1` are macro averages over the distinct ground-truth classes.
/// `micro_precision` counts only samples that carried a prediction and
/// `micro_f1` combines it with micro recall (= accuracy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub micro_precision: f64,
    pub micro_f1: f64,
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Street/city/country classification metrics over paired samples.
///
/// Labels are compared after [`normalize_label`]; a missing prediction counts
/// as a mismatch.
pub fn level_metrics(pred: &[PlaceLabels], truth: &[PlaceLabels], level: Level) -> Result<LevelMetrics, LabelError> {
    if pred.len() != truth.len() {
        return Err(LabelError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Err(LabelError::Empty);
    }

    #[derive(Default)]
    struct Counts {
        tp: usize,
        support: usize,
        predicted: usize,
    }
    let mut classes: BTreeMap<String, Counts> = BTreeMap::new();
    let mut truths = Vec::with_capacity(truth.len());
    for (index, t) in truth.iter().enumerate() {
        let label = t
            .level(level)
            .map(normalize_label)
            .filter(|s| !s.is_empty())
            .ok_or(LabelError::MissingTruth { index, level })?;
        classes.entry(label.clone()).or_default().support += 1;
        truths.push(label);
    }

    let mut correct = 0usize;
    let mut answered = 0usize;
    for (p, t) in pred.iter().zip(&truths) {
        let Some(p) = p.level(level).map(normalize_label).filter(|s| !s.is_empty()) else {
            continue;
        };
        answered += 1;
        if let Some(c) = classes.get_mut(&p) {
            c.predicted += 1;
        }
        if &p == t {
            correct += 1;
            classes.get_mut(t).expect("truth class registered").tp += 1;
        }
    }

    let k = classes.len() as f64;
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in classes.values() {
        let precision = if c.predicted > 0 { c.tp as f64 / c.predicted as f64 } else { 0.0 };
        let recall = c.tp as f64 / c.support as f64;
        p_sum += precision;
        r_sum += recall;
        f_sum += f1(precision, recall);
    }

    let accuracy = correct as f64 / truths.len() as f64;
    let micro_precision = if answered > 0 { correct as f64 / answered as f64 } else { 0.0 };
    Ok(LevelMetrics {
        accuracy,
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
        micro_precision,
        micro_f1: f1(micro_precision, accuracy),
    })
}

/// Distinct normalized labels at a level, sorted.
pub fn distinct_labels<'a>(labels: impl IntoIterator<Item = &'a PlaceLabels>, level: Level) -> BTreeSet<String> {
    labels.into_iter().filter_map(|l| l.level(level).map(normalize_label)).collect()
}
