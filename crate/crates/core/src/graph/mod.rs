//! Navigation graphs: panoramas as nodes, street-view links as undirected edges.

mod file;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_km, wrap_degrees, GeoPoint};
use crate::labels::{Continent, Difficulty, PlaceLabels};

pub use file::{
    load_graph_file, parse_graph, parse_graph_with_warnings, to_json, GraphFile, Manifest, ManifestEntry, MANIFEST_FILE,
};

/// Default minimum hop distance between the start node and any boundary node.
pub const DEFAULT_MIN_DEPTH: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error("graph has no nodes")]
    NoNodes,
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("edge {from:?}-{to:?} references absent node {missing:?}")]
    DanglingEndpoint { from: String, to: String, missing: String },
    #[error("self-loop on node {0:?}")]
    SelfLoop(String),
    #[error("edge {from:?}-{to:?} has non-positive length {length_m} m")]
    EdgeLength { from: String, to: String, length_m: f64 },
    #[error("start node {0:?} is not in the graph")]
    MissingStartNode(String),
    #[error("graph is disconnected: node {0:?} unreachable from the start node")]
    Disconnected(String),
    #[error("node {node:?} is missing label {field}")]
    MissingLabel { node: String, field: &'static str },
    #[error("node {node:?} has invalid coordinates: {reason}")]
    Coordinates { node: String, reason: String },
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("no path between {0:?} and {1:?}")]
    Unreachable(String, String),
    #[error("empty graph list")]
    EmptyList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoNode {
    pub id: String,
    pub location: GeoPoint,
    /// Compass bearing of the panorama's center column, `[0, 360)`.
    pub heading_ref: f64,
    pub image_ref: Option<String>,
    pub labels: PlaceLabels,
}

/// An undirected edge stored with `from < to` (string order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEdge {
    pub from: String,
    pub to: String,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub graph_id: String,
    pub continent: Continent,
    pub difficulty: Difficulty,
    pub start_node: String,
}

/// A validated, connected navigation graph. Immutable after construction.
#[derive(Debug, Clone)]
pub struct NavGraph {
    meta: GraphMeta,
    nodes: Vec<PanoNode>,
    index: HashMap<String, usize>,
    edges: Vec<NavEdge>,
    adjacency: Vec<Vec<usize>>,
    start: usize,
}

impl NavGraph {
    /// Validates and canonicalizes: nodes sorted by id, edges deduplicated as
    /// unordered pairs (first occurrence wins), adjacency sorted by node id.
    /// Edges given without a length get the haversine distance between their endpoints.
    pub fn new(
        meta: GraphMeta,
        mut nodes: Vec<PanoNode>,
        edges: impl IntoIterator<Item = (String, String, Option<f64>)>,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::NoNodes);
        }
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GraphError::DuplicateNode(w[0].id.clone()));
        }
        for n in &mut nodes {
            n.heading_ref = wrap_degrees(n.heading_ref);
        }
        let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

        let mut pairs: HashMap<(usize, usize), f64> = HashMap::new();
        let mut order = Vec::new();
        for (a, b, length) in edges {
            let ia = *index.get(&a).ok_or_else(|| GraphError::DanglingEndpoint {
                from: a.clone(),
                to: b.clone(),
                missing: a.clone(),
            })?;
            let ib = *index.get(&b).ok_or_else(|| GraphError::DanglingEndpoint {
                from: a.clone(),
                to: b.clone(),
                missing: b.clone(),
            })?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a));
            }
            let key = (ia.min(ib), ia.max(ib));
            if pairs.contains_key(&key) {
                continue;
            }
            let length_m = length.unwrap_or_else(|| haversine_km(nodes[ia].location, nodes[ib].location) * 1000.0);
            if !(length_m > 0.0) || !length_m.is_finite() {
                return Err(GraphError::EdgeLength { from: a, to: b, length_m });
            }
            pairs.insert(key, length_m);
            order.push(key);
        }
        order.sort_unstable();
        let edges: Vec<NavEdge> = order
            .iter()
            .map(|&(i, j)| NavEdge { from: nodes[i].id.clone(), to: nodes[j].id.clone(), length_m: pairs[&(i, j)] })
            .collect();

        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(i, j) in &order {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let start =
            *index.get(&meta.start_node).ok_or_else(|| GraphError::MissingStartNode(meta.start_node.clone()))?;

        let graph = Self { meta, nodes, index, edges, adjacency, start };
        let reach = graph.hops_from(start);
        if let Some(i) = reach.iter().position(Option::is_none) {
            return Err(GraphError::Disconnected(graph.nodes[i].id.clone()));
        }
        Ok(graph)
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn graph_id(&self) -> &str {
        &self.meta.graph_id
    }

    pub fn start_node(&self) -> &PanoNode {
        &self.nodes[self.start]
    }

    pub fn nodes(&self) -> &[PanoNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[NavEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&PanoNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn start_index(&self) -> usize {
        self.start
    }

    pub fn degree(&self, id: &str) -> Option<usize> {
        self.node_index(id).map(|i| self.adjacency[i].len())
    }

    /// Neighbor indices of node `i`, sorted by node id.
    pub fn neighbor_indices(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn neighbors(&self, id: &str) -> Result<impl Iterator<Item = &PanoNode>, GraphError> {
        let i = self.node_index(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        Ok(self.adjacency[i].iter().map(move |&j| &self.nodes[j]))
    }

    pub fn edge_between(&self, a: &str, b: &str) -> Option<&NavEdge> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search_by(|e| (e.from.as_str(), e.to.as_str()).cmp(&(lo, hi))).ok().map(|k| &self.edges[k])
    }

    /// Breadth-first hop distances from node index `source`.
    pub fn hops_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::from([source]);
        dist[source] = Some(0);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes are labelled");
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn shortest_path_hops(&self, u: &str, v: &str) -> Result<usize, GraphError> {
        let iu = self.node_index(u).ok_or_else(|| GraphError::UnknownNode(u.to_string()))?;
        let iv = self.node_index(v).ok_or_else(|| GraphError::UnknownNode(v.to_string()))?;
        self.hops_from(iu)[iv].ok_or_else(|| GraphError::Unreachable(u.to_string(), v.to_string()))
    }

    /// Ids of degree-1 nodes, in id order.
    pub fn boundary_nodes(&self) -> Vec<&str> {
        self.adjacency
            .iter()
            .enumerate()
            .filter(|(_, adj)| adj.len() == 1)
            .map(|(i, _)| self.nodes[i].id.as_str())
            .collect()
    }

    /// Checks that every boundary node is at least `min_depth` hops from the
    /// start node. Passes vacuously when there are no boundary nodes.
    pub fn validate_depth(&self, min_depth: usize) -> DepthCheck {
        let dist = self.hops_from(self.start);
        let nearest = self
            .adjacency
            .iter()
            .enumerate()
            .filter(|(_, adj)| adj.len() == 1)
            .map(|(i, _)| (dist[i].expect("graph is connected"), i))
            .min();
        match nearest {
            None => DepthCheck { min_depth, passed: true, nearest_boundary: None },
            Some((d, i)) => DepthCheck {
                min_depth,
                passed: d >= min_depth,
                nearest_boundary: Some(BoundaryWitness { node: self.nodes[i].id.clone(), hops: d }),
            },
        }
    }

    /// Node minimizing the sum of hop distances to all others; ties go to the smaller id.
    pub fn medoid(&self) -> &PanoNode {
        let best = (0..self.nodes.len())
            .min_by_key(|&i| {
                let total: usize = self.hops_from(i).iter().map(|d| d.unwrap_or(usize::MAX / 2)).sum();
                (total, i)
            })
            .expect("graph has nodes");
        &self.nodes[best]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryWitness {
    pub node: String,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthCheck {
    pub min_depth: usize,
    pub passed: bool,
    /// The boundary node closest to the start, if any.
    pub nearest_boundary: Option<BoundaryWitness>,
}

/// Means over a collection of graphs.
///
/// `avg_degree` is `2 * n_edges / n_nodes` computed from the means, and
/// `n_directed_links` is `2 * n_edges` for sources that count each link twice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_graphs: usize,
    pub n_nodes: f64,
    pub n_edges: f64,
    pub n_directed_links: f64,
    pub avg_degree: f64,
    pub boundary_count: f64,
}

pub fn graph_stats(graphs: &[NavGraph]) -> Result<GraphStats, GraphError> {
    if graphs.is_empty() {
        return Err(GraphError::EmptyList);
    }
    let n = graphs.len() as f64;
    let nodes = graphs.iter().map(|g| g.nodes.len()).sum::<usize>() as f64 / n;
    let edges = graphs.iter().map(|g| g.edges.len()).sum::<usize>() as f64 / n;
    let boundary = graphs.iter().map(|g| g.boundary_nodes().len()).sum::<usize>() as f64 / n;
    Ok(GraphStats {
        n_graphs: graphs.len(),
        n_nodes: nodes,
        n_edges: edges,
        n_directed_links: 2.0 * edges,
        avg_degree: 2.0 * edges / nodes,
        boundary_count: boundary,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn meta(start: &str) -> GraphMeta {
        GraphMeta {
            graph_id: "fixture".into(),
            continent: Continent::Europe,
            difficulty: Difficulty::Medium,
            start_node: start.into(),
        }
    }

    pub fn node(id: &str, lat: f64, lon: f64) -> PanoNode {
        PanoNode {
            id: id.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
            heading_ref: 0.0,
            image_ref: None,
            labels: PlaceLabels::new(None, Some("paris".into()), Some("france".into()), Some(Continent::Europe)),
        }
    }

    pub fn id(i: usize) -> String {
        format!("n{i:03}")
    }

    /// Nodes spaced ~11 m apart along a meridian, joined in sequence.
    pub fn path(n: usize, start: usize) -> NavGraph {
        let nodes = (0..n).map(|i| node(&id(i), 48.85 + i as f64 * 1e-4, 2.35)).collect();
        let edges = (1..n).map(|i| (id(i - 1), id(i), None));
        NavGraph::new(meta(&id(start)), nodes, edges).unwrap()
    }

    pub fn cycle(n: usize) -> NavGraph {
        let nodes = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                node(&id(i), 48.85 + 1e-3 * t.cos(), 2.35 + 1e-3 * t.sin())
            })
            .collect();
        let edges = (0..n).map(|i| (id(i), id((i + 1) % n), None));
        NavGraph::new(meta(&id(0)), nodes, edges).unwrap()
    }

    pub fn star(leaves: usize) -> NavGraph {
        let mut nodes = vec![node(&id(0), 48.85, 2.35)];
        for i in 1..=leaves {
            let t = i as f64 / leaves as f64 * std::f64::consts::TAU;
            nodes.push(node(&id(i), 48.85 + 1e-4 * t.cos(), 2.35 + 1e-4 * t.sin()));
        }
        let edges = (1..=leaves).map(|i| (id(0), id(i), None));
        NavGraph::new(meta(&id(0)), nodes, edges).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shortest_paths() {
        let g = path(3, 0);
        assert_eq!(g.shortest_path_hops(&id(0), &id(2)).unwrap(), 2);
        assert_eq!(g.shortest_path_hops(&id(0), &id(0)).unwrap(), 0);
        assert_eq!(path(21, 0).shortest_path_hops(&id(0), &id(20)).unwrap(), 20);
        assert!(matches!(g.shortest_path_hops("nope", &id(0)), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn boundaries() {
        assert_eq!(path(5, 0).boundary_nodes(), vec![id(0).as_str(), id(4).as_str()]);
        assert!(cycle(8).boundary_nodes().is_empty());
        assert_eq!(star(4).boundary_nodes().len(), 4);
    }

    #[test]
    fn depth_validation() {
        let ok = path(21, 10).validate_depth(DEFAULT_MIN_DEPTH);
        assert!(ok.passed);
        assert_eq!(ok.nearest_boundary.unwrap().hops, 10);

        let bad = path(19, 9).validate_depth(DEFAULT_MIN_DEPTH);
        assert!(!bad.passed);
        let w = bad.nearest_boundary.unwrap();
        assert_eq!(w.hops, 9);
        assert_eq!(w.node, id(0));

        let c = cycle(12).validate_depth(DEFAULT_MIN_DEPTH);
        assert!(c.passed && c.nearest_boundary.is_none());
    }

    #[test]
    fn stats() {
        let triangle = NavGraph::new(
            meta("a"),
            vec![node("a", 0.0, 0.0), node("b", 0.0, 0.001), node("c", 0.001, 0.0)],
            [("a", "b"), ("b", "c"), ("c", "a")].map(|(a, b)| (a.to_string(), b.to_string(), None)),
        )
        .unwrap();
        let s = graph_stats(std::slice::from_ref(&triangle)).unwrap();
        assert_eq!((s.n_nodes, s.n_edges, s.avg_degree), (3.0, 3.0, 2.0));

        let s = graph_stats(&[path(3, 0), path(5, 0)]).unwrap();
        assert_eq!((s.n_nodes, s.n_edges), (4.0, 3.0));
        assert_eq!(s.n_directed_links, 6.0);
        assert!(graph_stats(&[]).is_err());
    }

    #[test]
    fn construction_errors() {
        let two = || vec![node("a", 0.0, 0.0), node("b", 0.0, 0.001)];
        let e = |a: &str, b: &str| (a.to_string(), b.to_string(), None);
        assert_eq!(
            NavGraph::new(meta("a"), vec![node("a", 0.0, 0.0), node("a", 1.0, 0.0)], [e("a", "a")]).unwrap_err(),
            GraphError::DuplicateNode("a".into())
        );
        assert!(matches!(
            NavGraph::new(meta("a"), two(), [e("a", "z")]).unwrap_err(),
            GraphError::DanglingEndpoint { missing, .. } if missing == "z"
        ));
        assert_eq!(NavGraph::new(meta("a"), two(), [e("a", "a")]).unwrap_err(), GraphError::SelfLoop("a".into()));
        assert_eq!(
            NavGraph::new(meta("q"), two(), [e("a", "b")]).unwrap_err(),
            GraphError::MissingStartNode("q".into())
        );
        assert_eq!(NavGraph::new(meta("a"), two(), Vec::new()).unwrap_err(), GraphError::Disconnected("b".into()));
        let g = NavGraph::new(meta("a"), two(), [e("a", "b"), e("b", "a")]).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert!(g.edge_between("b", "a").is_some());
        // ~111 m between the endpoints
        assert!((g.edges()[0].length_m - 111.19).abs() < 0.01);
    }

    #[test]
    fn medoid_of_path_is_center() {
        assert_eq!(path(7, 0).medoid().id, id(3));
    }

    /// All-pairs hop distances by Floyd-Warshall over an adjacency matrix.
    fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        const INF: usize = usize::MAX / 4;
        let mut d = vec![vec![INF; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(a, b) in edges {
            d[a][b] = 1;
            d[b][a] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    fn random_connected() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..=12).prop_flat_map(|n| {
            let parents = prop::collection::vec(any::<prop::sample::Index>(), n - 1);
            let extra = prop::collection::vec((0..n, 0..n), 0..n * 2);
            (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
                let mut edges: Vec<(usize, usize)> =
                    parents.iter().enumerate().map(|(i, p)| (p.index(i + 1), i + 1)).collect();
                edges.extend(extra.into_iter().filter(|(a, b)| a != b));
                (n, edges)
            })
        })
    }

    proptest! {
        #[test]
        fn bfs_matches_floyd_warshall((n, edges) in random_connected()) {
            let nodes = (0..n).map(|i| node(&id(i), 10.0 + i as f64 * 1e-3, 20.0)).collect();
            let g = NavGraph::new(meta(&id(0)), nodes, edges.iter().map(|&(a, b)| (id(a), id(b), Some(10.0)))).unwrap();
            let fw = floyd_warshall(n, &edges);
            for (i, row) in fw.iter().enumerate() {
                for (j, &hops) in row.iter().enumerate() {
                    prop_assert_eq!(g.shortest_path_hops(&id(i), &id(j)).unwrap(), hops);
                }
            }
            let degree_sum: usize = (0..n).map(|i| g.degree(&id(i)).unwrap()).sum();
            prop_assert_eq!(degree_sum, 2 * g.edges().len());
            prop_assert!(g.validate_depth(0).passed);
        }
    }
}
