//! JSON graph documents and dataset manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GraphError, GraphMeta, NavGraph, PanoNode};
use crate::geo::GeoPoint;
use crate::labels::{Continent, Difficulty, PlaceLabels};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub graph_id: String,
    pub continent: Continent,
    pub difficulty: Difficulty,
    pub start_node: String,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub heading_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub labels: LabelRecord,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub street: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continent: Option<Continent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

/// Parses and validates a graph document, logging ignored fields.
pub fn parse_graph(bytes: &[u8]) -> Result<NavGraph, GraphError> {
    let (graph, warnings) = parse_graph_with_warnings(bytes)?;
    for w in &warnings {
        tracing::warn!(graph = graph.graph_id(), "{w}");
    }
    Ok(graph)
}

/// Like [`parse_graph`] but returns the unknown-field warnings instead of logging them.
pub fn parse_graph_with_warnings(bytes: &[u8]) -> Result<(NavGraph, Vec<String>), GraphError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GraphError::Malformed(e.to_string()))?;
    let doc: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;

    let mut warnings = Vec::new();
    let mut note = |scope: &str, extra: &BTreeMap<String, Value>| {
        for key in extra.keys() {
            warnings.push(format!("ignoring unknown field {key:?} in {scope}"));
        }
    };
    note("graph", &doc.extra);
    for n in &doc.nodes {
        note(&format!("node {:?}", n.id), &n.extra);
    }
    for e in &doc.edges {
        note(&format!("edge {:?}-{:?}", e.from, e.to), &e.extra);
    }

    let meta = GraphMeta {
        graph_id: doc.graph_id,
        continent: doc.continent,
        difficulty: doc.difficulty,
        start_node: doc.start_node,
    };
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| {
            let location = GeoPoint::new(n.lat, n.lon)
                .map_err(|e| GraphError::Coordinates { node: n.id.clone(), reason: e.to_string() })?;
            if !n.heading_ref.is_finite() {
                return Err(GraphError::Malformed(format!("node {:?} has non-finite heading_ref", n.id)));
            }
            let labels = PlaceLabels::new(
                n.labels.street,
                n.labels.city,
                n.labels.country,
                Some(n.labels.continent.unwrap_or(meta.continent)),
            );
            if labels.country.is_none() {
                return Err(GraphError::MissingLabel { node: n.id, field: "country" });
            }
            Ok(PanoNode { id: n.id, location, heading_ref: n.heading_ref, image_ref: n.image, labels })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let edges = doc.edges.into_iter().map(|e| (e.from, e.to, e.length_m));
    Ok((NavGraph::new(meta, nodes, edges)?, warnings))
}

impl From<&NavGraph> for GraphFile {
    fn from(g: &NavGraph) -> Self {
        let meta = g.meta();
        GraphFile {
            graph_id: meta.graph_id.clone(),
            continent: meta.continent,
            difficulty: meta.difficulty,
            start_node: meta.start_node.clone(),
            nodes: g
                .nodes()
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    lat: n.location.lat(),
                    lon: n.location.lon(),
                    heading_ref: n.heading_ref,
                    image: n.image_ref.clone(),
                    labels: LabelRecord {
                        street: n.labels.street.clone(),
                        city: n.labels.city.clone(),
                        country: n.labels.country.clone(),
                        continent: n.labels.continent,
                    },
                    extra: BTreeMap::new(),
                })
                .collect(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    length_m: Some(e.length_m),
                    extra: BTreeMap::new(),
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

/// Canonical pretty-printed document: nodes sorted by id, edges as sorted unordered pairs.
pub fn to_json(g: &NavGraph) -> String {
    serde_json::to_string_pretty(&GraphFile::from(g)).expect("graph documents always serialize")
}

pub fn load_graph_file(path: &Path) -> Result<NavGraph, GraphError> {
    let bytes = std::fs::read(path).map_err(|e| GraphError::Malformed(format!("{}: {e}", path.display())))?;
    parse_graph(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// Model that proposed the location, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub graphs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dataset_dir: &Path) -> std::io::Result<Manifest> {
        let text = std::fs::read_to_string(dataset_dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn graph_paths<'a>(&'a self, dataset_dir: &'a Path) -> impl Iterator<Item = (PathBuf, &'a ManifestEntry)> + 'a {
        self.graphs.iter().map(move |e| (dataset_dir.join(&e.file), e))
    }
}
