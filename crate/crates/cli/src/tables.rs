//! Diversity and trend tables: CSV in, CSV out.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use geonav_core::diversity::{
    clark_evans, grid_entropy, hull_area, mean_nn, normalize_per_continent, occupancy_grid, DiversityError,
};
use geonav_core::geo::minmax_normalize;
use geonav_core::stats::OlsMode;
use geonav_core::{trend_report, Continent, GeoPoint, GroupedScores, TrendConfig, TrendReport};
use serde::{Deserialize, Serialize};

use crate::output::{read_csv, write_csv, write_json};
use crate::CliError;

pub const DIVERSITY_CSV: &str = "diversity.csv";
pub const RADAR_CSV: &str = "radar.csv";
pub const TREND_CSV: &str = "trend.csv";
pub const TREND_JSON: &str = "trend.json";

/// Aggregate row label used for a model's mean over continents.
pub const ALL_CONTINENTS: &str = "ALL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub model: String,
    pub continent: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub model: String,
    pub continent: Continent,
    pub point: GeoPoint,
}

/// One model on one continent, or its mean over continents (`continent = "ALL"`).
/// Nearest-neighbor metrics are empty for single-point sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub model: String,
    pub continent: String,
    pub n: usize,
    pub occupancy: f64,
    pub entropy: f64,
    pub hull_area: f64,
    pub clark_evans: Option<f64>,
    pub mean_nn: Option<f64>,
}

/// Per-model means min-max scaled across models, for radar plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub model: String,
    pub occupancy: f64,
    pub entropy: f64,
    pub hull_area: f64,
    pub clark_evans: Option<f64>,
}

pub fn parse_points(bytes: &[u8]) -> anyhow::Result<Vec<ModelPoint>> {
    let rows: Vec<PointRow> = read_csv(bytes)?;
    if rows.is_empty() {
        anyhow::bail!("no points");
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            // header is line 1
            let line = i + 2;
            let continent = r.continent.parse().map_err(|e| anyhow::anyhow!("line {line}: {e}"))?;
            let point = GeoPoint::new(r.lat, r.lon).map_err(|e| anyhow::anyhow!("line {line}: {e}"))?;
            Ok(ModelPoint { model: r.model, continent, point })
        })
        .collect()
}

fn first_seen<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.iter().any(|o| o == n) {
            out.push(n.to_string());
        }
    }
    out
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-continent rows for every model (continents normalized separately),
/// each model followed by its `ALL` row. Models keep first-appearance order.
pub fn diversity_rows(points: &[ModelPoint], k: usize) -> Result<Vec<DiversityRow>, CliError> {
    let mut rows = Vec::new();
    for model in first_seen(points.iter().map(|p| p.model.as_str())) {
        let raw: Vec<(GeoPoint, Continent)> =
            points.iter().filter(|p| p.model == model).map(|p| (p.point, p.continent)).collect();
        let mut per = Vec::new();
        for ps in normalize_per_continent(&raw, &model) {
            let err = |e: DiversityError| CliError::Validation(e.to_string());
            per.push(DiversityRow {
                model: model.clone(),
                continent: ps.continent.map_or_else(String::new, |c| c.code().to_string()),
                n: ps.len(),
                occupancy: occupancy_grid(&ps, k).map_err(err)?,
                entropy: grid_entropy(&ps, k).map_err(err)?,
                hull_area: hull_area(&ps),
                // the unit square is the study area
                clark_evans: clark_evans(&ps, 1.0).ok(),
                mean_nn: mean_nn(&ps).ok(),
            });
        }
        let collect = |f: fn(&DiversityRow) -> Option<f64>| per.iter().filter_map(f).collect::<Vec<_>>();
        let all = DiversityRow {
            model: model.clone(),
            continent: ALL_CONTINENTS.into(),
            n: per.iter().map(|r| r.n).sum(),
            occupancy: mean(&collect(|r| Some(r.occupancy))).unwrap_or(0.0),
            entropy: mean(&collect(|r| Some(r.entropy))).unwrap_or(0.0),
            hull_area: mean(&collect(|r| Some(r.hull_area))).unwrap_or(0.0),
            clark_evans: mean(&collect(|r| r.clark_evans)),
            mean_nn: mean(&collect(|r| r.mean_nn)),
        };
        rows.extend(per);
        rows.push(all);
    }
    Ok(rows)
}

pub fn radar_rows(rows: &[DiversityRow]) -> Vec<RadarRow> {
    let all: Vec<&DiversityRow> = rows.iter().filter(|r| r.continent == ALL_CONTINENTS).collect();
    let scale = |f: fn(&DiversityRow) -> f64| minmax_normalize(&all.iter().map(|r| f(r)).collect::<Vec<_>>());
    let (occ, ent, hull) = (scale(|r| r.occupancy), scale(|r| r.entropy), scale(|r| r.hull_area));
    let defined: Vec<f64> = all.iter().filter_map(|r| r.clark_evans).collect();
    let mut ce = minmax_normalize(&defined).into_iter();
    all.iter()
        .enumerate()
        .map(|(i, r)| RadarRow {
            model: r.model.clone(),
            occupancy: occ[i],
            entropy: ent[i],
            hull_area: hull[i],
            clark_evans: r.clark_evans.and_then(|_| ce.next()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityOutput {
    pub rows: Vec<DiversityRow>,
    pub radar: Vec<RadarRow>,
}

/// Reads `model,continent,lat,lon` rows and writes `diversity.csv` and `radar.csv` into `out`.
pub fn cmd_diversity(points_csv: &Path, out: &Path, k: usize) -> Result<DiversityOutput, CliError> {
    let bytes =
        std::fs::read(points_csv).map_err(|e| CliError::Validation(format!("{}: {e}", points_csv.display())))?;
    let points = parse_points(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", points_csv.display())))?;
    let rows = diversity_rows(&points, k)?;
    let radar = radar_rows(&rows);
    write_csv(&out.join(DIVERSITY_CSV), &rows)?;
    write_csv(&out.join(RADAR_CSV), &radar)?;
    Ok(DiversityOutput { rows, radar })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub level: String,
    pub score: f64,
}

/// One model's trend statistics flattened for CSV; list fields are `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub model: String,
    pub levels: String,
    pub level_means: String,
    pub level_counts: String,
    pub f_stat: f64,
    pub f_p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub spearman_rho: f64,
    pub spearman_p_exact: Option<f64>,
    pub spearman_p_asymptotic: f64,
    pub ols_mode: OlsMode,
    pub ols_slope: f64,
    pub ols_p: f64,
    pub monotone: bool,
    pub remark: String,
}

pub const REMARK_PASS: &str = "✓";
pub const REMARK_FAIL: &str = "✗";

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

impl TrendRow {
    pub fn new(model: &str, r: &TrendReport) -> Self {
        Self {
            model: model.to_string(),
            levels: r.levels.join(";"),
            level_means: join(&r.level_means),
            level_counts: join(&r.level_counts),
            f_stat: r.f_stat,
            f_p: r.f_p,
            df_between: r.df_between,
            df_within: r.df_within,
            spearman_rho: r.spearman_rho,
            spearman_p_exact: r.spearman_p_exact,
            spearman_p_asymptotic: r.spearman_p_asymptotic,
            ols_mode: r.ols_mode,
            ols_slope: r.ols_slope,
            ols_p: r.ols_p,
            monotone: r.monotone_pass,
            remark: if r.remark { REMARK_PASS } else { REMARK_FAIL }.into(),
        }
    }

    pub fn level_means(&self) -> Vec<f64> {
        self.level_means.split(';').filter_map(|s| s.parse().ok()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTrend {
    pub model: String,
    pub report: TrendReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendOutput {
    pub models: Vec<ModelTrend>,
    /// Models left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl TrendOutput {
    pub fn rows(&self) -> Vec<TrendRow> {
        self.models.iter().map(|m| TrendRow::new(&m.model, &m.report)).collect()
    }
}

/// Groups scores by model and level. Levels keep their first-appearance order
/// across the whole file; models with fewer than two levels are skipped.
pub fn trend_table(scores: &[ScoreRow], cfg: &TrendConfig) -> TrendOutput {
    let levels = first_seen(scores.iter().map(|s| s.level.as_str()));
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for model in first_seen(scores.iter().map(|s| s.model.as_str())) {
        let mut by_level: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for s in scores.iter().filter(|s| s.model == model) {
            let i = levels.iter().position(|l| *l == s.level).expect("level registered");
            by_level.entry(i).or_default().push(s.score);
        }
        let names = by_level.keys().map(|&i| levels[i].clone()).collect();
        let samples = by_level.into_values().collect();
        match GroupedScores::new(names, samples).and_then(|g| trend_report(&g, cfg)) {
            Ok(report) => models.push(ModelTrend { model, report }),
            Err(e) => {
                tracing::warn!(model = model.as_str(), "skipping trend: {e}");
                skipped.push((model, e.to_string()));
            }
        }
    }
    TrendOutput { models, skipped }
}

/// Reads `model,level,score` rows and writes `trend.csv` and `trend.json` into `out`.
pub fn cmd_trend(scores_csv: &Path, out: &Path, cfg: &TrendConfig) -> Result<TrendOutput, CliError> {
    let bytes =
        std::fs::read(scores_csv).map_err(|e| CliError::Validation(format!("{}: {e}", scores_csv.display())))?;
    let scores: Vec<ScoreRow> =
        read_csv(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", scores_csv.display())))?;
    if scores.is_empty() {
        return Err(CliError::Validation(format!("{}: no scores", scores_csv.display())));
    }
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(CliError::Validation(format!("non-finite score for model {:?}", s.model)));
    }
    let table = trend_table(&scores, cfg);
    write_csv(&out.join(TREND_CSV), &table.rows()).context("writing trend table")?;
    write_json(&out.join(TREND_JSON), &table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::csv_bytes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point_rows(model: &str, pts: impl IntoIterator<Item = (f64, f64)>) -> Vec<PointRow> {
        pts.into_iter().map(|(lat, lon)| PointRow { model: model.into(), continent: "EU".into(), lat, lon }).collect()
    }

    #[test]
    fn uniform_dominates_clustered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let uniform: Vec<_> = (0..300).map(|_| (rng.gen_range(36.0..60.0), rng.gen_range(-10.0..30.0))).collect();
        // tight clusters, plus two far corners so both sets span the same box
        let mut clustered: Vec<_> = (0..298)
            .map(|i| {
                let (cy, cx) = [(40.0, 0.0), (50.0, 20.0)][i % 2];
                (cy + rng.gen_range(-0.3..0.3), cx + rng.gen_range(-0.3..0.3))
            })
            .collect();
        clustered.extend([(36.0, -10.0), (60.0, 30.0)]);
        let mut rows = point_rows("uniform", uniform);
        rows.extend(point_rows("clustered", clustered));
        let points = parse_points(&csv_bytes(&rows).unwrap()).unwrap();
        let table = diversity_rows(&points, 16).unwrap();
        let get = |m: &str| table.iter().find(|r| r.model == m && r.continent == ALL_CONTINENTS).unwrap().clone();
        let (u, c) = (get("uniform"), get("clustered"));
        assert!(u.occupancy > c.occupancy);
        assert!(u.entropy > c.entropy);
        assert!(u.hull_area > c.hull_area);
        assert!(u.clark_evans.unwrap() > c.clark_evans.unwrap());

        let radar = radar_rows(&table);
        assert_eq!(radar.len(), 2);
        assert_eq!((radar[0].occupancy, radar[1].occupancy), (1.0, 0.0));
    }

    #[test]
    fn single_point_is_degenerate_not_fatal() {
        let rows = point_rows("solo", [(10.0, 10.0)]);
        let points = parse_points(&csv_bytes(&rows).unwrap()).unwrap();
        let table = diversity_rows(&points, 16).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].n, 1);
        assert_eq!(table[0].occupancy, 1.0 / 256.0);
        assert_eq!(table[0].entropy, 0.0);
        assert!(table[0].entropy.is_sign_positive());
        assert_eq!(table[0].hull_area, 0.0);
        assert_eq!(table[0].clark_evans, None);
    }

    #[test]
    fn malformed_rows_name_lines() {
        assert!(parse_points(b"model,continent,lat,lon\n").is_err());
        let e = parse_points(b"model,continent,lat,lon\nm,EU,1,2\nm,EU,95,2\n").unwrap_err();
        assert!(e.to_string().starts_with("line 3:"), "{e}");
        let e = parse_points(b"model,continent,lat,lon\nm,Atlantis,1,2\n").unwrap_err();
        assert!(e.to_string().starts_with("line 2:"), "{e}");
        let e = parse_points(b"model,continent,lat,lon\nm,EU,1,2\nm,EU,x,2\n").unwrap_err();
        assert!(e.to_string().starts_with("line 3:"), "{e}");
    }

    fn scores(model: &str, level: &str, values: &[f64]) -> Vec<ScoreRow> {
        values.iter().map(|&score| ScoreRow { model: model.into(), level: level.into(), score }).collect()
    }

    #[test]
    fn trend_remarks() {
        let mut rows = Vec::new();
        for (level, base) in [("20%", 10.0), ("50%", 20.0), ("80%", 30.0)] {
            rows.extend(scores("rising", level, &[base - 1.0, base, base + 1.0]));
        }
        for (level, base) in [("20%", 10.0), ("50%", 30.0), ("80%", 20.0)] {
            rows.extend(scores("dip", level, &[base - 1.0, base, base + 1.0]));
        }
        rows.extend(scores("single", "20%", &[1.0, 2.0]));
        let out = trend_table(&rows, &TrendConfig::default());
        let table = out.rows();
        assert_eq!(table.iter().map(|r| r.model.as_str()).collect::<Vec<_>>(), ["rising", "dip"]);
        assert_eq!(table[0].remark, REMARK_PASS);
        assert_eq!(table[1].remark, REMARK_FAIL);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].0, "single");

        let back: Vec<TrendRow> = read_csv(&csv_bytes(&table).unwrap()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back[1].level_means(), vec![10.0, 30.0, 20.0]);
    }

    #[test]
    fn trend_reference_groups() {
        let mut rows = scores("m", "a", &[1.0, 2.0, 3.0]);
        rows.extend(scores("m", "b", &[2.0, 3.0, 4.0]));
        rows.extend(scores("m", "c", &[3.0, 4.0, 5.0]));
        let table = trend_table(&rows, &TrendConfig::default()).rows();
        assert!((table[0].f_stat - 3.0).abs() < 1e-9);
        assert!((table[0].f_p - 0.125).abs() < 1e-9);
    }
}
