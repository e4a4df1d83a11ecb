use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geonav_cli::consensus::{read_histogram, NODES_CSV, SVG_FILE};
use geonav_cli::eval::{LevelRow, EPISODES_CSV, LEVELS_CSV, REPORT_JSON, SCORES_CSV, TRACE_DIR, TRACE_INDEX};
use geonav_cli::output::read_csv;
use geonav_cli::tables::{ScoreRow, DIVERSITY_CSV, REMARK_FAIL, REMARK_PASS, TREND_CSV};
use geonav_cli::{BenchReport, DiversityRow, EpisodeRecord, TrendRow};
use geonav_core::consensus::{normalize_nav_graph, polar_bin};
use geonav_core::graph::load_graph_file;
use geonav_core::ConsensusConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn geonav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geonav")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn eval(out: &Path, extra: &[&str]) -> Output {
    let config = fixtures().join("run.toml");
    let mut args = vec!["eval", "--config", s(&config), "--out", s(out)];
    args.extend_from_slice(extra);
    geonav(&args)
}

fn report(out: &Path) -> BenchReport {
    serde_json::from_slice(&std::fs::read(out.join(REPORT_JSON)).unwrap()).unwrap()
}

#[test]
fn validate_fixture_dataset() {
    let o = geonav(&["validate", "--dataset", s(&fixtures().join("dataset"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("3/3 graphs valid"), "{text}");
    assert!(text.contains("avg degree"), "{text}");
}

#[test]
fn validate_reports_shallow_graph() {
    let o = geonav(&["validate", "--dataset", s(&fixtures().join("shallow"))]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL madrid-path19: min-depth rule"), "{text}");
    assert!(text.contains("is 9 hops"), "{text}");
}

#[test]
fn validate_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = geonav(&["validate", "--dataset", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest missing"));
}

#[test]
fn oracle_eval_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let o = eval(dir.path(), &["--backend", "oracle:2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!((r.episodes, r.failed, r.null_guesses), (9, 0, 0));
    assert_eq!(r.overall.mean_distance_km, Some(0.0));
    assert_eq!(r.overall.mean_score, Some(100.0));
    for l in &r.levels {
        for m in [l.country, l.city, l.street] {
            assert_eq!(m.unwrap().accuracy, 1.0);
        }
    }
}

#[test]
fn replay_eval_is_reproducible() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(eval(a.path(), &[]).status.code(), Some(0));
    assert_eq!(eval(b.path(), &[]).status.code(), Some(0));
    assert_eq!(eval(c.path(), &["--parallelism", "5"]).status.code(), Some(0));
    let tree = read_tree(a.path());
    assert_eq!(tree, read_tree(b.path()));
    assert_eq!(tree, read_tree(c.path()));
    // a different seed moves the start headings
    let d = tempfile::tempdir().unwrap();
    assert_eq!(eval(d.path(), &["--seed", "1"]).status.code(), Some(0));
    assert_ne!(tree, read_tree(d.path()));
}

#[test]
fn unparseable_replies_end_without_guess() {
    let dir = tempfile::tempdir().unwrap();
    let o = eval(dir.path(), &["--backend", "scripted:I cannot tell where this is."]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r.null_guesses, r.episodes);
    assert_eq!(r.overall.mean_score, None);
    let records: Vec<EpisodeRecord> = read_csv(&std::fs::read(dir.path().join(EPISODES_CSV)).unwrap()).unwrap();
    assert!(records.iter().all(|e| e.termination.as_deref() == Some("parse_failure") && e.turns == 1));
}

#[test]
fn failed_episodes_are_counted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let partial = dir.path().join("partial.json");
    let full: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fixtures().join("replay.json")).unwrap()).unwrap();
    let mut episodes = full["episodes"].as_object().unwrap().clone();
    episodes.remove("tokyo-plus");
    std::fs::write(&partial, serde_json::json!({ "episodes": episodes }).to_string()).unwrap();
    let out = dir.path().join("out");
    let spec = format!("replay:{}", partial.display());
    assert_eq!(eval(&out, &["--backend", &spec]).status.code(), Some(0));
    let r = report(&out);
    assert_eq!((r.episodes, r.failed), (9, 3));
    assert!(r.levels.iter().all(|l| l.failed == 1 && l.scores.scored == 2));
}

#[test]
fn report_accounting_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    // stale file from an earlier run must not survive
    std::fs::create_dir_all(dir.path().join(TRACE_DIR)).unwrap();
    std::fs::write(dir.path().join(TRACE_DIR).join("9999_old.json"), "{}").unwrap();
    assert_eq!(eval(dir.path(), &[]).status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r.levels.iter().map(|l| l.episodes).sum::<usize>(), r.episodes);

    let index = std::fs::read_to_string(dir.path().join(TRACE_DIR).join(TRACE_INDEX)).unwrap();
    let records: Vec<EpisodeRecord> = index.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), r.episodes);
    let mut listed: Vec<String> = records.iter().filter_map(|e| e.trace.clone()).collect();
    listed.sort();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path().join(TRACE_DIR))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != TRACE_INDEX)
        .map(|n| format!("{TRACE_DIR}/{n}"))
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);

    let csv_records: Vec<EpisodeRecord> = read_csv(&std::fs::read(dir.path().join(EPISODES_CSV)).unwrap()).unwrap();
    assert_eq!(csv_records, records);
    let levels: Vec<LevelRow> = read_csv(&std::fs::read(dir.path().join(LEVELS_CSV)).unwrap()).unwrap();
    assert_eq!(levels.len(), 3);
    assert_eq!(levels[0].mean_score, r.levels[0].scores.mean_score);

    // the scores table feeds the trend command unchanged
    let scores: Vec<ScoreRow> = read_csv(&std::fs::read(dir.path().join(SCORES_CSV)).unwrap()).unwrap();
    assert_eq!(scores.len(), 9);
    let trend_out = dir.path().join("trend");
    let o = geonav(&["trend", s(&dir.path().join(SCORES_CSV)), "--out", s(&trend_out)]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<TrendRow> = read_csv(&std::fs::read(trend_out.join(TREND_CSV)).unwrap()).unwrap();
    let t = r.trend.as_ref().unwrap();
    assert_eq!(rows[0].level_means(), t.level_means);
    assert_eq!(rows[0].f_stat, t.f_stat);

    let o = geonav(&["report", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let md = String::from_utf8(o.stdout).unwrap();
    assert!(md.contains("| replay | 20% | 3 |"), "{md}");
}

fn write_points(path: &Path, rows: &[(String, f64, f64)]) {
    let mut text = String::from("model,continent,lat,lon\n");
    for (m, lat, lon) in rows {
        text.push_str(&format!("{m},Europe,{lat},{lon}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn diversity_command() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rows: Vec<(String, f64, f64)> =
        (0..200).map(|_| ("uniform".into(), rng.gen_range(40.0..55.0), rng.gen_range(-5.0..20.0))).collect();
    rows.extend(
        (0..198).map(|_| ("clustered".into(), 47.5 + rng.gen_range(-0.2..0.2), 7.5 + rng.gen_range(-0.2..0.2))),
    );
    rows.push(("clustered".into(), 40.0, -5.0));
    rows.push(("clustered".into(), 55.0, 20.0));
    let input = dir.path().join("points.csv");
    write_points(&input, &rows);
    let o = geonav(&["diversity", s(&input), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table: Vec<DiversityRow> = read_csv(&std::fs::read(dir.path().join(DIVERSITY_CSV)).unwrap()).unwrap();
    let get = |m: &str| table.iter().find(|r| r.model == m && r.continent == "ALL").unwrap();
    let (u, c) = (get("uniform"), get("clustered"));
    assert!(u.occupancy > c.occupancy && u.entropy > c.entropy && u.hull_area > c.hull_area);
    assert!(u.clark_evans.unwrap() > c.clark_evans.unwrap());

    write_points(&input, &[("solo".into(), 1.0, 1.0)]);
    assert_eq!(geonav(&["diversity", s(&input), "--out", s(dir.path())]).status.code(), Some(0));

    std::fs::write(&input, "").unwrap();
    assert_eq!(geonav(&["diversity", s(&input), "--out", s(dir.path())]).status.code(), Some(1));
    std::fs::write(&input, "model,continent,lat,lon\nm,EU,1,2\nm,EU,1\n").unwrap();
    let o = geonav(&["diversity", s(&input), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn trend_command() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scores.csv");
    let mut text = String::from("model,level,score\n");
    for (model, means) in [("rising", [10.0, 20.0, 30.0]), ("dip", [10.0, 30.0, 20.0]), ("anova", [2.0, 3.0, 4.0])] {
        for (level, m) in ["20%", "50%", "80%"].iter().zip(means) {
            for d in [-1.0, 0.0, 1.0] {
                text.push_str(&format!("{model},{level},{}\n", m + d));
            }
        }
    }
    text.push_str("lonely,20%,50\n");
    std::fs::write(&input, text).unwrap();
    let o = geonav(&["trend", s(&input), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped lonely"));
    let rows: Vec<TrendRow> = read_csv(&std::fs::read(dir.path().join(TREND_CSV)).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.model.as_str()).collect::<Vec<_>>(), ["rising", "dip", "anova"]);
    assert_eq!(rows[0].remark, REMARK_PASS);
    assert_eq!(rows[1].remark, REMARK_FAIL);
    assert!((rows[2].f_stat - 3.0).abs() < 1e-9);
}

fn count_bin_circles(svg: &str) -> usize {
    svg.matches("<title>").count()
}

#[test]
fn consensus_command() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let dataset = fixtures().join("dataset");
    for out in [a.path(), b.path()] {
        let o = geonav(&["consensus", "--dataset", s(&dataset), "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let svg = std::fs::read_to_string(a.path().join(SVG_FILE)).unwrap();
    assert_eq!(svg.as_bytes(), std::fs::read(b.path().join(SVG_FILE)).unwrap());
    let h = read_histogram(a.path()).unwrap();
    let occupied = h.node_counts.iter().flatten().filter(|&&c| c > 0).count();
    assert_eq!(count_bin_circles(&svg), occupied);
    assert_eq!(h.total_nodes(), 49 + 49 + 26);
    assert_eq!(h.graphs, 3);
    assert!(a.path().join(NODES_CSV).is_file());
}

#[test]
fn single_graph_consensus_matches_polar_bin() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::copy(fixtures().join("dataset/tokyo-plus.json"), data.join("tokyo-plus.json")).unwrap();
    std::fs::write(data.join("manifest.json"), r#"{"graphs":[{"file":"tokyo-plus.json"}]}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(geonav(&["consensus", "--dataset", s(&data), "--out", s(&out)]).status.code(), Some(0));
    let cfg = ConsensusConfig::default();
    let g = load_graph_file(&data.join("tokyo-plus.json")).unwrap();
    let expected = polar_bin(&normalize_nav_graph(&g, cfg.center).unwrap(), &cfg).unwrap();
    assert!(read_histogram(&out).unwrap().approx_eq(&expected, 1e-12));
}

#[test]
fn bad_config_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "parallelism = 0\n").unwrap();
    let o = geonav(&["eval", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let o = geonav(&["eval", "--dataset", s(&fixtures().join("shallow")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
