//! Inputs shared by the benchmarks in `benches/`.

use geonav_core::graph::{GraphMeta, PanoNode};
use geonav_core::{Continent, Difficulty, GeoPoint, NavGraph, PlaceLabels};

/// `side × side` street grid, about 50 m between neighbors, starting at the center.
pub fn grid_graph(side: usize) -> NavGraph {
    let id = |r: usize, c: usize| format!("g{r:03}_{c:03}");
    let mut nodes = Vec::with_capacity(side * side);
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            nodes.push(PanoNode {
                id: id(r, c),
                location: GeoPoint::new(48.85 + r as f64 * 4.5e-4, 2.35 + c as f64 * 6.8e-4)
                    .expect("valid coordinates"),
                heading_ref: 0.0,
                image_ref: None,
                labels: PlaceLabels::new(None, Some("paris".into()), Some("france".into()), Some(Continent::Europe)),
            });
            if r + 1 < side {
                edges.push((id(r, c), id(r + 1, c), None));
            }
            if c + 1 < side {
                edges.push((id(r, c), id(r, c + 1), None));
            }
        }
    }
    let meta = GraphMeta {
        graph_id: format!("grid{side}"),
        continent: Continent::Europe,
        difficulty: Difficulty::Medium,
        start_node: id(side / 2, side / 2),
    };
    NavGraph::new(meta, nodes, edges).expect("grid graph is valid")
}
