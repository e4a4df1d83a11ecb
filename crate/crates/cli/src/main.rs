use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geonav_cli::{
    cmd_consensus, cmd_diversity, cmd_eval, cmd_report, cmd_trend, validate_dataset, BackendSpec, CliError, RunConfig,
    EXIT_VALIDATION,
};

#[derive(Parser)]
#[command(name = "geonav", version, about = "Embodied geolocation benchmark harness")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory containing manifest.json.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for episode runs.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every graph in the dataset and print per-graph results.
    Validate {
        #[arg(long)]
        min_depth: Option<usize>,
    },
    /// Run one episode per (graph, coverage level) and write traces and a report.
    Eval {
        /// oracle[:turns], scripted:<reply>, replay:<file> or chat:<model>[@<endpoint>]
        #[arg(long)]
        backend: Option<BackendSpec>,
        #[arg(long)]
        max_turns: Option<u32>,
        #[arg(long)]
        fov: Option<f64>,
    },
    /// Spatial diversity tables from a model,continent,lat,lon CSV.
    Diversity {
        points: PathBuf,
        /// Grid side for occupancy and entropy.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// ANOVA and trend table from a model,level,score CSV.
    Trend { scores: PathBuf },
    /// Polar consensus histogram and SVG for the dataset.
    Consensus,
    /// Summary tables over finished eval runs (defaults to --out).
    Report { runs: Vec<PathBuf> },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.dataset {
        cfg.dataset_dir = d;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }

    match cli.command {
        Command::Validate { min_depth } => {
            let summary = validate_dataset(&cfg.dataset_dir, min_depth.unwrap_or(cfg.min_depth))?;
            print!("{}", summary.render());
            if !summary.passed() {
                std::process::exit(EXIT_VALIDATION);
            }
        }
        Command::Eval { backend, max_turns, fov } => {
            if let Some(b) = backend {
                cfg.backend = b;
            }
            if let Some(t) = max_turns {
                cfg.max_turns = t;
            }
            if let Some(f) = fov {
                cfg.fov = f;
            }
            let out = cmd_eval(&cfg)?;
            let r = &out.report;
            println!(
                "{} episodes ({} failed, {} without a guess) with backend {}",
                r.episodes, r.failed, r.null_guesses, r.model
            );
            for l in &r.levels {
                let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.2}"));
                println!(
                    "  {}: mean distance {} km, mean score {}",
                    l.label,
                    fmt(l.scores.mean_distance_km),
                    fmt(l.scores.mean_score)
                );
            }
            println!("wrote {}", out.output_dir.display());
        }
        Command::Diversity { points, grid } => {
            let out = cmd_diversity(&points, &cfg.output_dir, grid.unwrap_or(cfg.diversity_grid))?;
            for r in out.rows {
                let ce = r.clark_evans.map_or("-".into(), |v| format!("{v:.4}"));
                println!(
                    "{} {}: n={} occupancy={:.4} entropy={:.4} hull={:.4} R={ce}",
                    r.model, r.continent, r.n, r.occupancy, r.entropy, r.hull_area
                );
            }
        }
        Command::Trend { scores } => {
            let out = cmd_trend(&scores, &cfg.output_dir, &cfg.trend)?;
            for row in out.rows() {
                println!(
                    "{}: means {} F={:.3} p={:.4} rho={} slope={:.4} (p={:.4}) {}",
                    row.model,
                    row.level_means,
                    row.f_stat,
                    row.f_p,
                    row.spearman_rho,
                    row.ols_slope,
                    row.ols_p,
                    row.remark
                );
            }
            for (model, why) in out.skipped {
                eprintln!("skipped {model}: {why}");
            }
        }
        Command::Consensus => {
            let h = cmd_consensus(&cfg.dataset_dir, &cfg.output_dir, cfg.min_depth, &cfg.consensus)?;
            println!(
                "{} graphs, {} nodes, {} edges binned into {}x{} cells",
                h.graphs,
                h.total_nodes(),
                h.total_edges(),
                h.radial_bins,
                h.angular_bins
            );
        }
        Command::Report { runs } => {
            let runs = if runs.is_empty() { vec![cfg.output_dir.clone()] } else { runs };
            print!("{}", cmd_report(&runs, &cfg.output_dir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
