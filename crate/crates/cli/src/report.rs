//! Summary tables across one or more evaluation runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{BenchReport, REPORT_JSON};
use crate::output::{write_atomic, write_csv};
use crate::tables::{REMARK_FAIL, REMARK_PASS};
use crate::CliError;

pub const SUMMARY_MD: &str = "summary.md";
pub const SUMMARY_CSV: &str = "summary.csv";

/// One model at one coverage level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub level: String,
    pub episodes: usize,
    pub failed: usize,
    pub null_guesses: usize,
    pub mean_distance_km: Option<f64>,
    pub mean_score: Option<f64>,
    pub country_acc: Option<f64>,
    pub country_f1: Option<f64>,
    pub city_acc: Option<f64>,
    pub city_f1: Option<f64>,
    pub street_acc: Option<f64>,
    pub street_f1: Option<f64>,
}

pub fn summary_rows(reports: &[BenchReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.levels.iter().map(move |l| SummaryRow {
                model: r.model.clone(),
                level: l.label.clone(),
                episodes: l.episodes,
                failed: l.failed,
                null_guesses: l.null_guesses,
                mean_distance_km: l.scores.mean_distance_km,
                mean_score: l.scores.mean_score,
                country_acc: l.country.map(|m| m.accuracy),
                country_f1: l.country.map(|m| m.f1),
                city_acc: l.city.map(|m| m.accuracy),
                city_f1: l.city.map(|m| m.f1),
                street_acc: l.street.map(|m| m.accuracy),
                street_f1: l.street.map(|m| m.f1),
            })
        })
        .collect()
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn render_markdown(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Performance\n");
    let _ = writeln!(
        out,
        "| Model | Level | Episodes | Failed | No guess | Distance (km) | Score | Country Acc | Country F1 | City Acc | City F1 | Street Acc | Street F1 |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|---|---|");
    for r in summary_rows(reports) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.model,
            r.level,
            r.episodes,
            r.failed,
            r.null_guesses,
            cell(r.mean_distance_km, 2),
            cell(r.mean_score, 2),
            cell(r.country_acc, 3),
            cell(r.country_f1, 3),
            cell(r.city_acc, 3),
            cell(r.city_f1, 3),
            cell(r.street_acc, 3),
            cell(r.street_f1, 3),
        );
    }
    let trends: Vec<_> = reports.iter().filter_map(|r| r.trend.as_ref().map(|t| (&r.model, t))).collect();
    if !trends.is_empty() {
        let _ = writeln!(out, "\n## Trend across levels\n");
        let _ = writeln!(out, "| Model | Level means | F | p | Spearman rho | Slope | Slope p | Remark |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
        for (model, t) in trends {
            let means: Vec<String> = t.level_means.iter().map(|m| format!("{m:.2}")).collect();
            let _ = writeln!(
                out,
                "| {model} | {} | {:.3} | {:.4} | {:.2} | {:.4} | {:.4} | {} |",
                means.join(" / "),
                t.f_stat,
                t.f_p,
                t.spearman_rho,
                t.ols_slope,
                t.ols_p,
                if t.remark { REMARK_PASS } else { REMARK_FAIL }
            );
        }
    }
    let diversity: Vec<_> = reports.iter().flat_map(|r| &r.diversity).collect();
    if !diversity.is_empty() {
        let _ = writeln!(out, "\n## Start-location diversity\n");
        let _ = writeln!(out, "| Proposer | Continent | n | Occupancy | Entropy | Hull area | Clark-Evans R |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for d in diversity {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {} |",
                d.model,
                d.continent,
                d.n,
                d.occupancy,
                d.entropy,
                d.hull_area,
                cell(d.clark_evans, 4)
            );
        }
    }
    out
}

pub fn load_report(run_dir: &Path) -> Result<BenchReport, CliError> {
    let path = run_dir.join(REPORT_JSON);
    let bytes = std::fs::read(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Collects the reports of finished runs into `summary.md` and `summary.csv` under `out`.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<String, CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::Validation("no run directories given".into()));
    }
    let reports = run_dirs.iter().map(|d| load_report(d)).collect::<Result<Vec<_>, _>>()?;
    let md = render_markdown(&reports);
    write_atomic(&out.join(SUMMARY_MD), md.as_bytes())?;
    write_csv(&out.join(SUMMARY_CSV), &summary_rows(&reports))?;
    Ok(md)
}
