//! Consensus topology across navigation graphs.
//!
//! Each graph is projected to local meters, centered, scaled by its median
//! edge length and rotated onto its principal axis. Node positions are then
//! binned on a polar grid and node and edge frequencies are summed across
//! graphs.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_km, wrap_degrees, EARTH_RADIUS_KM};
use crate::graph::NavGraph;

/// Largest graph extent for which the flat projection is used.
pub const MAX_DIAMETER_KM: f64 = 100.0;

/// Values this close below a bin edge are counted in the upper bin, so that
/// rounding noise from the similarity normalization cannot move a node.
const BIN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("graph {graph} spans {diameter_km:.1} km, above the {MAX_DIAMETER_KM} km projection limit")]
    TooLarge { graph: String, diameter_km: f64 },
    #[error("need at least 2 nodes and 1 edge")]
    TooSmall,
    #[error("median edge length is zero")]
    ZeroScale,
    #[error("edge endpoint {0} out of range")]
    BadEdge(usize),
    #[error("no graphs to aggregate")]
    Empty,
    #[error("invalid binning: {0}")]
    Binning(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterPolicy {
    #[default]
    StartNode,
    /// Node minimizing the total hop distance to all others.
    Medoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    pub radial_bins: usize,
    pub angular_bins: usize,
    /// Quantile of node radii mapped to the outer ring.
    pub percentile: f64,
    pub center: CenterPolicy,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self { radial_bins: 6, angular_bins: 8, percentile: 0.99, center: CenterPolicy::StartNode }
    }
}

impl ConsensusConfig {
    fn validate(&self) -> Result<(), ConsensusError> {
        if self.radial_bins == 0 || self.angular_bins == 0 {
            return Err(ConsensusError::Binning("bin counts must be positive".into()));
        }
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return Err(ConsensusError::Binning(format!("percentile {} outside (0, 1]", self.percentile)));
        }
        Ok(())
    }
}

/// Planar meters about the start node: `x = R·Δlon·cos(lat₀)`, `y = R·Δlat`.
pub fn project_local(g: &NavGraph) -> Result<Vec<[f64; 2]>, ConsensusError> {
    let nodes = g.nodes();
    let mut diameter_km: f64 = 0.0;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            diameter_km = diameter_km.max(haversine_km(a.location, b.location));
        }
    }
    if diameter_km >= MAX_DIAMETER_KM {
        return Err(ConsensusError::TooLarge { graph: g.graph_id().to_string(), diameter_km });
    }
    let origin = g.start_node().location;
    let r_m = EARTH_RADIUS_KM * 1000.0;
    let cos0 = origin.lat().to_radians().cos();
    Ok(nodes
        .iter()
        .map(|n| {
            let dlon = wrap_degrees(n.location.lon() - origin.lon() + 180.0) - 180.0;
            let dlat = n.location.lat() - origin.lat();
            [r_m * dlon.to_radians() * cos0, r_m * dlat.to_radians()]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedGraph {
    pub positions: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize)>,
    /// Median edge length in input units.
    pub scale_used: f64,
    /// Counter-clockwise rotation applied after scaling, radians.
    pub rotation_used: f64,
}

/// Middle value, or the mean of the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Population covariance `(sxx, sxy, syy)` about the centroid.
pub fn covariance(points: &[[f64; 2]]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut c = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        c.0 += dx * dx;
        c.1 += dx * dy;
        c.2 += dy * dy;
    }
    (c.0 / n, c.1 / n, c.2 / n)
}

/// Centers on `center`, scales by the median edge length and rotates the
/// principal axis onto +x. Between the two orientations of that axis the
/// one with non-negative `Σx³` is kept. Isotropic spreads keep their input
/// orientation.
pub fn normalize_graph(
    positions: &[[f64; 2]],
    edges: &[(usize, usize)],
    center: usize,
) -> Result<NormalizedGraph, ConsensusError> {
    if positions.len() < 2 || edges.is_empty() {
        return Err(ConsensusError::TooSmall);
    }
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= positions.len() || b >= positions.len()) {
        return Err(ConsensusError::BadEdge(a.max(b)));
    }
    let c = *positions.get(center).ok_or(ConsensusError::BadEdge(center))?;
    let centered: Vec<[f64; 2]> = positions.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect();
    let lengths: Vec<f64> =
        edges.iter().map(|&(a, b)| (centered[a][0] - centered[b][0]).hypot(centered[a][1] - centered[b][1])).collect();
    let scale = median(&lengths).unwrap_or(0.0);
    if !(scale > 0.0) {
        return Err(ConsensusError::ZeroScale);
    }
    let scaled: Vec<[f64; 2]> = centered.iter().map(|p| [p[0] / scale, p[1] / scale]).collect();

    let (sxx, sxy, syy) = covariance(&scaled);
    let spread = sxx + syy;
    let isotropic = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt() <= 1e-9 * spread;
    let mut angle = if isotropic { 0.0 } else { -0.5 * (2.0 * sxy).atan2(sxx - syy) };
    let mut out: Vec<[f64; 2]> = scaled.iter().map(|&p| rotate(p, angle)).collect();
    let m3: f64 = out.iter().map(|p| p[0].powi(3)).sum();
    let m3_scale: f64 = out.iter().map(|p| p[0].abs().powi(3)).sum();
    if !isotropic && m3 < -1e-9 * m3_scale {
        angle += std::f64::consts::PI;
        out = scaled.iter().map(|&p| rotate(p, angle)).collect();
    }
    out[center] = [0.0, 0.0];
    Ok(NormalizedGraph {
        positions: out,
        edges: edges.to_vec(),
        scale_used: scale,
        rotation_used: angle.rem_euclid(TAU),
    })
}

/// Projects and normalizes a navigation graph; edge endpoints are node indices.
pub fn normalize_nav_graph(g: &NavGraph, policy: CenterPolicy) -> Result<NormalizedGraph, ConsensusError> {
    let positions = project_local(g)?;
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|e| {
            (g.node_index(&e.from).expect("edge endpoints exist"), g.node_index(&e.to).expect("edge endpoints exist"))
        })
        .collect();
    let center = match policy {
        CenterPolicy::StartNode => g.start_index(),
        CenterPolicy::Medoid => g.node_index(&g.medoid().id).expect("medoid is a node"),
    };
    normalize_graph(&positions, &edges, center)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarHistogram {
    pub radial_bins: usize,
    pub angular_bins: usize,
    /// `node_counts[r][a]`.
    pub node_counts: Vec<Vec<u64>>,
    /// Keyed by flat bin pair `(r·A + a, r'·A + a')`, stored in both orders.
    pub edge_counts: BTreeMap<(usize, usize), u64>,
    /// Radius mapped to the outer edge of the last ring.
    pub r_max: f64,
    pub graphs: usize,
}

impl PolarHistogram {
    fn empty(cfg: &ConsensusConfig, r_max: f64) -> Self {
        Self {
            radial_bins: cfg.radial_bins,
            angular_bins: cfg.angular_bins,
            node_counts: vec![vec![0; cfg.angular_bins]; cfg.radial_bins],
            edge_counts: BTreeMap::new(),
            r_max,
            graphs: 0,
        }
    }

    /// Same bins and counts, with `r_max` equal to relative tolerance `tol`.
    pub fn approx_eq(&self, other: &PolarHistogram, tol: f64) -> bool {
        (self.radial_bins, self.angular_bins, self.graphs) == (other.radial_bins, other.angular_bins, other.graphs)
            && self.node_counts == other.node_counts
            && self.edge_counts == other.edge_counts
            && (self.r_max - other.r_max).abs() <= tol * self.r_max.abs().max(other.r_max.abs()).max(1.0)
    }

    pub fn total_nodes(&self) -> u64 {
        self.node_counts.iter().flatten().sum()
    }

    /// Each undirected edge counted once.
    pub fn total_edges(&self) -> u64 {
        self.edge_counts.iter().filter(|((a, b), _)| a <= b).map(|(_, c)| c).sum()
    }

    pub fn flat_bin(&self, r: usize, a: usize) -> usize {
        r * self.angular_bins + a
    }

    pub fn unflatten(&self, bin: usize) -> (usize, usize) {
        (bin / self.angular_bins, bin % self.angular_bins)
    }

    fn add_edge(&mut self, a: usize, b: usize, count: u64) {
        *self.edge_counts.entry((a, b)).or_insert(0) += count;
        if a != b {
            *self.edge_counts.entry((b, a)).or_insert(0) += count;
        }
    }

    /// Element-wise sum; both histograms must share bins and `r_max`.
    pub fn merge(&mut self, other: &PolarHistogram) -> Result<(), ConsensusError> {
        if (self.radial_bins, self.angular_bins) != (other.radial_bins, other.angular_bins)
            || (self.r_max - other.r_max).abs() > 1e-12 * self.r_max.abs().max(1.0)
        {
            return Err(ConsensusError::Binning("histograms use different bins".into()));
        }
        for (row, orow) in self.node_counts.iter_mut().zip(&other.node_counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        for (k, c) in &other.edge_counts {
            *self.edge_counts.entry(*k).or_insert(0) += c;
        }
        self.graphs += other.graphs;
        Ok(())
    }
}

/// Nearest-rank quantile, `sorted[ceil(p·n) − 1]`.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

fn bin_index(fraction: f64, bins: usize) -> usize {
    ((fraction * bins as f64 + BIN_EPS).floor().max(0.0) as usize).min(bins - 1)
}

/// Polar bin `(radial, angular)` of a point; the origin is at angle 0 and
/// radii beyond `r_max` land in the outer ring.
pub fn polar_cell(p: [f64; 2], r_max: f64, radial_bins: usize, angular_bins: usize) -> (usize, usize) {
    let r = p[0].hypot(p[1]);
    let mut theta = p[1].atan2(p[0]).rem_euclid(TAU);
    if TAU - theta <= BIN_EPS * TAU {
        theta = 0.0;
    }
    let rb = if r_max > 0.0 { bin_index(r / r_max, radial_bins) } else { 0 };
    let ab = if r == 0.0 { 0 } else { bin_index(theta / TAU, angular_bins) };
    (rb, ab)
}

fn radii(g: &NormalizedGraph) -> impl Iterator<Item = f64> + '_ {
    g.positions.iter().map(|p| p[0].hypot(p[1]))
}

fn bin_with(g: &NormalizedGraph, cfg: &ConsensusConfig, r_max: f64) -> PolarHistogram {
    let mut h = PolarHistogram::empty(cfg, r_max);
    let cells: Vec<usize> = g
        .positions
        .iter()
        .map(|&p| {
            let (r, a) = polar_cell(p, r_max, cfg.radial_bins, cfg.angular_bins);
            h.node_counts[r][a] += 1;
            h.flat_bin(r, a)
        })
        .collect();
    for &(a, b) in &g.edges {
        h.add_edge(cells[a], cells[b], 1);
    }
    h.graphs = 1;
    h
}

/// Histogram of one graph with `r_max` taken from its own radii.
pub fn polar_bin(g: &NormalizedGraph, cfg: &ConsensusConfig) -> Result<PolarHistogram, ConsensusError> {
    cfg.validate()?;
    let r_max = nearest_rank(&radii(g).collect::<Vec<_>>(), cfg.percentile);
    Ok(bin_with(g, cfg, r_max))
}

/// Sum of per-graph histograms sharing one `r_max` drawn from the pooled radii.
pub fn aggregate_normalized(
    graphs: &[NormalizedGraph],
    cfg: &ConsensusConfig,
) -> Result<PolarHistogram, ConsensusError> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(ConsensusError::Empty);
    }
    let pooled: Vec<f64> = graphs.iter().flat_map(radii).collect();
    let r_max = nearest_rank(&pooled, cfg.percentile);
    let mut total = PolarHistogram::empty(cfg, r_max);
    for g in graphs {
        total.merge(&bin_with(g, cfg, r_max))?;
    }
    Ok(total)
}

pub fn aggregate_consensus(graphs: &[NavGraph], cfg: &ConsensusConfig) -> Result<PolarHistogram, ConsensusError> {
    let normalized = graphs.iter().map(|g| normalize_nav_graph(g, cfg.center)).collect::<Result<Vec<_>, _>>()?;
    aggregate_normalized(&normalized, cfg)
}

/// Static SVG: one circle per occupied bin (radius ∝ node count) and one
/// line per bin pair (stroke width ∝ edge count), over the polar grid.
pub fn render_svg(h: &PolarHistogram, size: u32) -> String {
    let s = size as f64;
    let c = s / 2.0;
    let outer = s * 0.45;
    let ring = outer / h.radial_bins as f64;
    let center_of = |r: usize, a: usize| {
        let rad = if r == 0 && h.radial_bins > 1 { 0.0 } else { (r as f64 + 0.5) * ring };
        let theta = (a as f64 + 0.5) * TAU / h.angular_bins as f64;
        (c + rad * theta.cos(), c - rad * theta.sin())
    };
    let max_node = h.node_counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let max_edge = h.edge_counts.values().copied().max().unwrap_or(0).max(1) as f64;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(out, r##"<g fill="none" stroke="#d0d0d0" stroke-width="1">"##);
    for r in 1..=h.radial_bins {
        let _ = writeln!(out, r#"<circle cx="{c:.3}" cy="{c:.3}" r="{:.3}"/>"#, r as f64 * ring);
    }
    for a in 0..h.angular_bins {
        let t = a as f64 * TAU / h.angular_bins as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{c:.3}" y1="{c:.3}" x2="{:.3}" y2="{:.3}"/>"#,
            c + outer * t.cos(),
            c - outer * t.sin()
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r##"<g stroke="#3366aa" stroke-linecap="round" stroke-opacity="0.7">"##);
    for (&(a, b), &count) in h.edge_counts.iter().filter(|((a, b), _)| a < b) {
        let (x1, y1) = {
            let (r, t) = h.unflatten(a);
            center_of(r, t)
        };
        let (x2, y2) = {
            let (r, t) = h.unflatten(b);
            center_of(r, t)
        };
        let w = 0.5 + 5.5 * count as f64 / max_edge;
        let _ = writeln!(out, r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke-width="{w:.3}"/>"#);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r##"<g fill="#cc4422" fill-opacity="0.8">"##);
    for (r, row) in h.node_counts.iter().enumerate() {
        for (a, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let (x, y) = center_of(r, a);
            let rad = 1.5 + (ring * 0.45 - 1.5).max(0.0) * count as f64 / max_node;
            let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{rad:.3}"><title>{count}</title></circle>"#);
        }
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{meta, node};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg() -> ConsensusConfig {
        ConsensusConfig::default()
    }

    /// Spine along +x from the origin with a crossbar at x = 3, so the
    /// shape is symmetric about its principal axis but not along it.
    fn arrow() -> (Vec<[f64; 2]>, Vec<(usize, usize)>) {
        let pts = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [3.0, 0.0],
            [4.0, 0.0],
            [3.0, 1.0],
            [3.0, -1.0],
            [3.0, 2.0],
            [3.0, -2.0],
        ];
        let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (3, 5), (3, 6), (5, 7), (6, 8)];
        (pts, edges)
    }

    fn similarity(pts: &[[f64; 2]], angle: f64, scale: f64, shift: [f64; 2]) -> Vec<[f64; 2]> {
        pts.iter()
            .map(|&p| {
                let q = rotate(p, angle);
                [q[0] * scale + shift[0], q[1] * scale + shift[1]]
            })
            .collect()
    }

    #[test]
    fn projection_examples() {
        let nodes = vec![node("a", 0.0, 0.0), node("b", 0.0, 1.0 / 60.0), node("c", 1.0 / 60.0, 0.0)];
        let edges = [("a", "b"), ("a", "c")].map(|(x, y)| (x.to_string(), y.to_string(), None));
        let g = NavGraph::new(meta("a"), nodes, edges).unwrap();
        let p = project_local(&g).unwrap();
        let per_degree = EARTH_RADIUS_KM * 1000.0 * std::f64::consts::PI / 180.0;
        assert_eq!(p[0], [0.0, 0.0]);
        assert_abs_diff_eq!(p[1][0], per_degree / 60.0, epsilon = 1e-6);
        assert_eq!(p[1][1], 0.0);
        assert_abs_diff_eq!(p[2][1], per_degree / 60.0, epsilon = 1e-6);
        assert_abs_diff_eq!(per_degree, 111_194.93, epsilon = 0.01);

        // latitude-independent north offset, cos-scaled east offset
        let nodes = vec![node("a", 60.0, 10.0), node("b", 60.01, 10.0), node("c", 60.0, 10.02)];
        let edges = [("a", "b"), ("a", "c")].map(|(x, y)| (x.to_string(), y.to_string(), None));
        let g = NavGraph::new(meta("a"), nodes, edges).unwrap();
        let p = project_local(&g).unwrap();
        assert_abs_diff_eq!(p[1][1], per_degree * 0.01, epsilon = 1e-6);
        assert_abs_diff_eq!(p[2][0], per_degree * 0.02 * 0.5, epsilon = 1e-6);

        let far = vec![node("a", 0.0, 0.0), node("b", 1.0, 0.0)];
        let g = NavGraph::new(meta("a"), far, [("a".to_string(), "b".to_string(), None)]).unwrap();
        assert!(matches!(project_local(&g), Err(ConsensusError::TooLarge { .. })));
    }

    #[test]
    fn normalization_examples() {
        let line = normalize_graph(&[[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]], &[(0, 1), (1, 2)], 0).unwrap();
        for (p, x) in line.positions.iter().zip([0.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(p[0], x, epsilon = 1e-12);
            assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
        }

        let pts = [[0.0, 0.0], [2.0, 0.0], [2.0, 4.0], [8.0, 4.0]];
        let ng = normalize_graph(&pts, &[(0, 1), (1, 2), (2, 3)], 0).unwrap();
        assert_eq!(ng.scale_used, 4.0);
        let lens: Vec<f64> = ng
            .edges
            .iter()
            .map(|&(a, b)| {
                let (p, q) = (ng.positions[a], ng.positions[b]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .collect();
        assert_abs_diff_eq!(median(&lens).unwrap(), 1.0, epsilon = 1e-12);

        let cross = [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let ng = normalize_graph(&cross, &[(0, 1), (0, 2), (0, 3), (0, 4)], 0).unwrap();
        assert_eq!(ng.rotation_used, 0.0);
        assert_eq!(ng.positions, cross.to_vec());

        assert_eq!(normalize_graph(&[[0.0, 0.0], [0.0, 0.0]], &[(0, 1)], 0).unwrap_err(), ConsensusError::ZeroScale);
        assert_eq!(normalize_graph(&[[0.0, 0.0]], &[], 0).unwrap_err(), ConsensusError::TooSmall);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[6.0, 2.0, 4.0]), Some(4.0));
        assert_eq!(median(&[1.0, 4.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn binning_examples() {
        assert_eq!(polar_cell([0.0, 0.0], 1.0, 6, 8), (0, 0));
        assert_eq!(polar_cell([0.5, 1e-12], 1.0, 6, 8), (3, 0));
        assert_eq!(polar_cell([0.5, -1e-15], 1.0, 6, 8), (3, 0), "angles just below 2π wrap to bin 0");
        assert_eq!(polar_cell([5.0, 0.0], 1.0, 6, 8), (5, 0), "beyond r_max goes to the outer ring");
        assert_eq!(polar_cell([-1.0, 0.0], 2.0, 6, 8), (3, 4));
        assert_eq!(polar_cell([0.0, -1.0], 2.0, 6, 8), (3, 6));

        let ng = NormalizedGraph {
            positions: vec![[0.0, 0.0], [0.01, 0.0], [1.0, 0.0]],
            edges: vec![(0, 1), (1, 2)],
            scale_used: 1.0,
            rotation_used: 0.0,
        };
        let h = polar_bin(&ng, &cfg()).unwrap();
        assert_eq!(h.node_counts[0][0], 2);
        assert_eq!(h.edge_counts[&(0, 0)], 1);
        assert_eq!(h.total_edges(), 2);
        assert_eq!(h.edge_counts[&(0, h.flat_bin(5, 0))], h.edge_counts[&(h.flat_bin(5, 0), 0)]);

        let single =
            NormalizedGraph { positions: vec![[0.0, 0.0]], edges: vec![], scale_used: 1.0, rotation_used: 0.0 };
        assert_eq!(polar_bin(&single, &cfg()).unwrap().node_counts[0][0], 1);
    }

    #[test]
    fn nearest_rank_is_duplication_invariant() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.99), 99.0);
        let doubled: Vec<f64> = v.iter().chain(&v).copied().collect();
        assert_eq!(nearest_rank(&doubled, 0.99), 99.0);
        assert_eq!(nearest_rank(&[3.0], 0.99), 3.0);
    }

    #[test]
    fn similarity_invariance() {
        let (pts, edges) = arrow();
        let base = polar_bin(&normalize_graph(&pts, &edges, 0).unwrap(), &cfg()).unwrap();
        for (angle, scale, shift) in [(0.7, 3.0, [5.0, -2.0]), (2.9, 0.01, [-100.0, 40.0]), (-1.2, 250.0, [0.0, 0.0])] {
            let moved = similarity(&pts, angle, scale, shift);
            let ng = normalize_graph(&moved, &edges, 0).unwrap();
            let orig = normalize_graph(&pts, &edges, 0).unwrap();
            for (p, q) in ng.positions.iter().zip(&orig.positions) {
                assert_abs_diff_eq!(p[0], q[0], epsilon = 1e-9);
                assert_abs_diff_eq!(p[1], q[1], epsilon = 1e-9);
            }
            assert!(polar_bin(&ng, &cfg()).unwrap().approx_eq(&base, 1e-9));
        }
    }

    #[test]
    fn mirror_images_agree() {
        let (pts, edges) = arrow();
        let mirrored: Vec<[f64; 2]> = pts.iter().map(|p| [-p[0], p[1]]).collect();
        let a = normalize_graph(&pts, &edges, 0).unwrap();
        let b = normalize_graph(&mirrored, &edges, 0).unwrap();
        assert!(a.positions.iter().map(|p| p[0].powi(3)).sum::<f64>() > 0.0);
        assert!(polar_bin(&a, &cfg()).unwrap().approx_eq(&polar_bin(&b, &cfg()).unwrap(), 1e-9));
        // a mirror about an oblique line is a mirror about the y axis plus a rotation
        let oblique = similarity(&mirrored, 0.4, 1.0, [0.0, 0.0]);
        let c = polar_bin(&normalize_graph(&oblique, &edges, 0).unwrap(), &cfg()).unwrap();
        assert!(c.approx_eq(&polar_bin(&a, &cfg()).unwrap(), 1e-9));
    }

    #[test]
    fn aggregation() {
        let (pts, edges) = arrow();
        let ng = normalize_graph(&pts, &edges, 0).unwrap();
        let one = aggregate_normalized(std::slice::from_ref(&ng), &cfg()).unwrap();
        assert_eq!(one, polar_bin(&ng, &cfg()).unwrap());
        let two = aggregate_normalized(&[ng.clone(), ng.clone()], &cfg()).unwrap();
        assert_eq!(two.r_max, one.r_max);
        for (r2, r1) in two.node_counts.iter().flatten().zip(one.node_counts.iter().flatten()) {
            assert_eq!(*r2, 2 * r1);
        }
        for (k, v) in &one.edge_counts {
            assert_eq!(two.edge_counts[k], 2 * v);
        }
        assert_eq!((two.total_nodes(), two.total_edges(), two.graphs), (18, 16, 2));

        let line = normalize_graph(&[[0.0, 0.0], [0.0, 1.0], [0.0, 3.0]], &[(0, 1), (1, 2)], 0).unwrap();
        let ab = aggregate_normalized(&[ng.clone(), line.clone()], &cfg()).unwrap();
        let ba = aggregate_normalized(&[line, ng], &cfg()).unwrap();
        assert_eq!(ab, ba);
        assert!(aggregate_normalized(&[], &cfg()).is_err());
    }

    #[test]
    fn nav_graph_pipeline_and_medoid() {
        let g = crate::graph::fixtures::path(5, 0);
        let start = normalize_nav_graph(&g, CenterPolicy::StartNode).unwrap();
        assert_eq!(start.positions[0], [0.0, 0.0]);
        assert_abs_diff_eq!(start.positions[4][0], 4.0, epsilon = 1e-6);
        let med = normalize_nav_graph(&g, CenterPolicy::Medoid).unwrap();
        assert_eq!(med.positions[2], [0.0, 0.0]);
        let h = aggregate_consensus(&[g.clone(), g], &cfg()).unwrap();
        assert_eq!((h.total_nodes(), h.total_edges()), (10, 8));
    }

    #[test]
    fn svg_is_deterministic() {
        let (pts, edges) = arrow();
        let h = polar_bin(&normalize_graph(&pts, &edges, 0).unwrap(), &cfg()).unwrap();
        let a = render_svg(&h, 400);
        assert_eq!(a, render_svg(&h, 400));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        let occupied = h.node_counts.iter().flatten().filter(|&&c| c > 0).count();
        assert_eq!(a.matches("<title>").count(), occupied);
    }

    fn cloud() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y)| [x, y]), 3..20)
    }

    proptest! {
        #[test]
        fn pca_diagonalizes(pts in cloud()) {
            let edges: Vec<(usize, usize)> = (1..pts.len()).map(|i| (i - 1, i)).collect();
            let Ok(ng) = normalize_graph(&pts, &edges, 0) else { return Ok(()) };
            let (sxx, sxy, syy) = covariance(&ng.positions);
            let tol = 1e-9 * (sxx + syy).max(1.0);
            prop_assert!(sxy.abs() <= tol, "sxy = {sxy}");
            prop_assert!(sxx >= syy - tol);
        }

        #[test]
        fn positions_similarity_invariant(pts in cloud(), angle in -3.0f64..3.0, scale in 0.1f64..10.0, dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
            let edges: Vec<(usize, usize)> = (1..pts.len()).map(|i| (i - 1, i)).collect();
            let Ok(a) = normalize_graph(&pts, &edges, 0) else { return Ok(()) };
            let (sxx, sxy, syy) = covariance(&a.positions);
            // skip near-isotropic and near-symmetric clouds where the frame is ill-conditioned
            prop_assume!((sxx - syy).abs() > 1e-3 * (sxx + syy) && sxy.abs() < 1.0);
            let m3: f64 = a.positions.iter().map(|p| p[0].powi(3)).sum();
            let m3s: f64 = a.positions.iter().map(|p| p[0].abs().powi(3)).sum();
            prop_assume!(m3.abs() > 1e-3 * m3s);
            let b = normalize_graph(&similarity(&pts, angle, scale, [dx, dy]), &edges, 0).unwrap();
            for (p, q) in a.positions.iter().zip(&b.positions) {
                prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
            }
        }

        #[test]
        fn histogram_totals(pts in cloud()) {
            let edges: Vec<(usize, usize)> = (1..pts.len()).map(|i| (i - 1, i)).collect();
            let Ok(ng) = normalize_graph(&pts, &edges, 0) else { return Ok(()) };
            let h = polar_bin(&ng, &cfg()).unwrap();
            prop_assert_eq!(h.total_nodes() as usize, pts.len());
            prop_assert_eq!(h.total_edges() as usize, edges.len());
            for ((a, b), c) in &h.edge_counts {
                prop_assert_eq!(h.edge_counts.get(&(*b, *a)), Some(c));
            }
        }
    }
}
