//! Loading and checking a dataset directory (manifest plus graph files).

use std::path::{Path, PathBuf};

use geonav_core::graph::{load_graph_file, Manifest, ManifestEntry, MANIFEST_FILE};
use geonav_core::{graph_stats, GraphStats, NavGraph};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct DatasetGraph {
    pub entry: ManifestEntry,
    pub graph: NavGraph,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub graphs: Vec<DatasetGraph>,
}

impl Dataset {
    pub fn nav_graphs(&self) -> Vec<NavGraph> {
        self.graphs.iter().map(|g| g.graph.clone()).collect()
    }
}

/// Outcome for one manifest entry. `failures` name the rule that broke.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphCheck {
    pub file: String,
    pub graph_id: Option<String>,
    pub nodes: usize,
    pub edges: usize,
    pub boundary_nodes: usize,
    /// Hops from the start to the nearest boundary node.
    pub start_depth: Option<usize>,
    pub failures: Vec<String>,
}

impl GraphCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub dataset_dir: PathBuf,
    pub min_depth: usize,
    pub graphs: Vec<GraphCheck>,
    /// Means over the graphs that passed.
    pub stats: Option<GraphStats>,
}

impl ValidationSummary {
    pub fn passed(&self) -> bool {
        !self.graphs.is_empty() && self.graphs.iter().all(GraphCheck::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.graphs {
            let name = g.graph_id.as_deref().unwrap_or(&g.file);
            if g.passed() {
                out.push_str(&format!(
                    "PASS {name}: {} nodes, {} edges, {} boundary, depth {}\n",
                    g.nodes,
                    g.edges,
                    g.boundary_nodes,
                    g.start_depth.map_or("unbounded".to_string(), |d| d.to_string())
                ));
            } else {
                for f in &g.failures {
                    out.push_str(&format!("FAIL {name}: {f}\n"));
                }
            }
        }
        let passed = self.graphs.iter().filter(|g| g.passed()).count();
        out.push_str(&format!("{passed}/{} graphs valid (min depth {})\n", self.graphs.len(), self.min_depth));
        if let Some(s) = &self.stats {
            out.push_str(&format!(
                "mean nodes {:.2}, mean edges {:.2}, avg degree {:.2}, mean boundary {:.2}\n",
                s.n_nodes, s.n_edges, s.avg_degree, s.boundary_count
            ));
        }
        out
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(CliError::Validation(format!("{}: manifest missing", path.display())));
    }
    let manifest = Manifest::load(dir).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if manifest.graphs.is_empty() {
        return Err(CliError::Validation(format!("{}: manifest lists no graphs", path.display())));
    }
    Ok(manifest)
}

fn check_one(path: &Path, entry: &ManifestEntry, min_depth: usize) -> (GraphCheck, Option<NavGraph>) {
    let mut check = GraphCheck {
        file: entry.file.clone(),
        graph_id: None,
        nodes: 0,
        edges: 0,
        boundary_nodes: 0,
        start_depth: None,
        failures: Vec::new(),
    };
    let graph = match load_graph_file(path) {
        Ok(g) => g,
        Err(e) => {
            check.failures.push(format!("structure rule: {e}"));
            return (check, None);
        }
    };
    check.graph_id = Some(graph.graph_id().to_string());
    check.nodes = graph.nodes().len();
    check.edges = graph.edges().len();
    check.boundary_nodes = graph.boundary_nodes().len();
    let depth = graph.validate_depth(min_depth);
    check.start_depth = depth.nearest_boundary.as_ref().map(|w| w.hops);
    if !depth.passed {
        let w = depth.nearest_boundary.expect("a failed depth check has a witness");
        check.failures.push(format!(
            "min-depth rule: boundary node {:?} is {} hops from start node {:?} (need at least {min_depth})",
            w.node,
            w.hops,
            graph.start_node().id
        ));
    }
    let ok = check.passed();
    (check, ok.then_some(graph))
}

/// Parses every graph and runs the structural and depth rules, collecting
/// all failures instead of stopping at the first.
pub fn validate_dataset(dir: &Path, min_depth: usize) -> Result<ValidationSummary, CliError> {
    inspect(dir, min_depth).map(|(summary, _)| summary)
}

fn inspect(dir: &Path, min_depth: usize) -> Result<(ValidationSummary, Vec<DatasetGraph>), CliError> {
    let manifest = read_manifest(dir)?;
    let mut checks = Vec::new();
    let mut good = Vec::new();
    for (path, entry) in manifest.graph_paths(dir) {
        let (check, graph) = check_one(&path, entry, min_depth);
        checks.push(check);
        good.extend(graph.map(|graph| DatasetGraph { entry: entry.clone(), graph }));
    }
    let mut ids: Vec<&str> = checks.iter().filter_map(|c| c.graph_id.as_deref()).collect();
    ids.sort_unstable();
    let dups: Vec<String> = ids.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0].to_string()).collect();
    for c in &mut checks {
        if c.graph_id.as_ref().is_some_and(|id| dups.contains(id)) {
            c.failures.push("unique-id rule: graph_id appears more than once in the manifest".into());
        }
    }
    let graphs: Vec<NavGraph> = good.iter().map(|g| g.graph.clone()).collect();
    let summary = ValidationSummary {
        dataset_dir: dir.to_path_buf(),
        min_depth,
        stats: graph_stats(&graphs).ok(),
        graphs: checks,
    };
    Ok((summary, good))
}

/// Loads a dataset for downstream commands; any rule failure is a validation error.
pub fn load_dataset(dir: &Path, min_depth: usize) -> Result<Dataset, CliError> {
    let (summary, graphs) = inspect(dir, min_depth)?;
    if !summary.passed() {
        return Err(CliError::Validation(summary.render()));
    }
    Ok(Dataset { dir: dir.to_path_buf(), graphs })
}
