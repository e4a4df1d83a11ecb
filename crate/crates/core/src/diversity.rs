//! Spatial spread of proposed locations.
//!
//! Points are min-max normalized to the unit square per continent, then
//! summarized by grid occupancy, grid entropy, convex-hull area, mean
//! nearest-neighbor distance and the Clark–Evans aggregation ratio.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::labels::Continent;

pub const DEFAULT_GRID: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiversityError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("grid side must be at least 1")]
    EmptyGrid,
    #[error("study area must be positive, got {0}")]
    Area(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet2D {
    pub points: Vec<[f64; 2]>,
    pub continent: Option<Continent>,
    pub model_tag: String,
}

impl PointSet2D {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points, continent: None, model_tag: String::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n: usize,
    pub occupancy: f64,
    pub entropy: f64,
    pub hull_area: f64,
    pub clark_evans: f64,
    pub mean_nn: f64,
}

fn minmax_axis(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values.iter().map(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.5 }).collect()
}

/// Min-max maps `(lon, lat)` onto the unit square, axes independently.
/// A zero-extent axis maps to 0.5.
pub fn normalize_points(points: &[GeoPoint]) -> Vec<[f64; 2]> {
    let xs = minmax_axis(&points.iter().map(|p| p.lon()).collect::<Vec<_>>());
    let ys = minmax_axis(&points.iter().map(|p| p.lat()).collect::<Vec<_>>());
    xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect()
}

/// One normalized set per continent present, in continent order.
pub fn normalize_per_continent(raw: &[(GeoPoint, Continent)], model_tag: &str) -> Vec<PointSet2D> {
    let mut groups: BTreeMap<Continent, Vec<GeoPoint>> = BTreeMap::new();
    for &(p, c) in raw {
        groups.entry(c).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(c, pts)| PointSet2D {
            points: normalize_points(&pts),
            continent: Some(c),
            model_tag: model_tag.to_string(),
        })
        .collect()
}

/// Cell index along one axis; the upper boundary belongs to the last cell.
pub fn cell_of(v: f64, k: usize) -> usize {
    ((v * k as f64).floor().max(0.0) as usize).min(k - 1)
}

fn cell_counts(ps: &PointSet2D, k: usize) -> BTreeMap<(usize, usize), usize> {
    let mut counts = BTreeMap::new();
    for p in &ps.points {
        *counts.entry((cell_of(p[0], k), cell_of(p[1], k))).or_insert(0) += 1;
    }
    counts
}

/// Fraction of the `k × k` cells holding at least one point.
pub fn occupancy_grid(ps: &PointSet2D, k: usize) -> Result<f64, DiversityError> {
    if k == 0 {
        return Err(DiversityError::EmptyGrid);
    }
    Ok(cell_counts(ps, k).len() as f64 / (k * k) as f64)
}

/// Shannon entropy of cell frequencies divided by `ln(k²)`.
pub fn grid_entropy(ps: &PointSet2D, k: usize) -> Result<f64, DiversityError> {
    if k == 0 {
        return Err(DiversityError::EmptyGrid);
    }
    if ps.is_empty() {
        return Err(DiversityError::TooFewPoints { need: 1, got: 0 });
    }
    if k == 1 {
        return Ok(0.0);
    }
    let n = ps.len() as f64;
    let h: f64 = cell_counts(ps, k)
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    // adding 0.0 turns a single-cell -0.0 into 0.0
    Ok((h / ((k * k) as f64).ln()).clamp(0.0, 1.0) + 0.0)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain),
/// collinear boundary points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice.abs() / 2.0
}

pub fn hull_area(ps: &PointSet2D) -> f64 {
    polygon_area(&convex_hull(&ps.points))
}

fn nn_distances(points: &[[f64; 2]]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, a)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Mean Euclidean distance from each point to its nearest other point.
pub fn mean_nn(ps: &PointSet2D) -> Result<f64, DiversityError> {
    if ps.len() < 2 {
        return Err(DiversityError::TooFewPoints { need: 2, got: ps.len() });
    }
    let d = nn_distances(&ps.points);
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeCorrection {
    #[default]
    None,
    /// Donnelly's boundary correction for a study region with this perimeter.
    Donnelly { perimeter: f64 },
}

/// Observed mean nearest-neighbor distance over its expectation under
/// complete spatial randomness, `0.5 / sqrt(n / area)`.
pub fn clark_evans(ps: &PointSet2D, area: f64) -> Result<f64, DiversityError> {
    clark_evans_with(ps, area, EdgeCorrection::None)
}

pub fn clark_evans_with(ps: &PointSet2D, area: f64, correction: EdgeCorrection) -> Result<f64, DiversityError> {
    if !(area > 0.0) {
        return Err(DiversityError::Area(area));
    }
    let observed = mean_nn(ps)?;
    let n = ps.len() as f64;
    let expected = match correction {
        EdgeCorrection::None => 0.5 / (n / area).sqrt(),
        EdgeCorrection::Donnelly { perimeter } => 0.5 * (area / n).sqrt() + (0.0514 + 0.041 / n.sqrt()) * perimeter / n,
    };
    Ok(observed / expected)
}

/// All five metrics over the unit square with a `k × k` grid.
pub fn diversity_report(ps: &PointSet2D, k: usize) -> Result<DiversityReport, DiversityError> {
    Ok(DiversityReport {
        n: ps.len(),
        occupancy: occupancy_grid(ps, k)?,
        entropy: grid_entropy(ps, k)?,
        hull_area: hull_area(ps),
        clark_evans: clark_evans(ps, 1.0)?,
        mean_nn: mean_nn(ps)?,
    })
}

/// Component-wise mean of several reports; `n` is the total point count.
pub fn mean_report(reports: &[DiversityReport]) -> Option<DiversityReport> {
    if reports.is_empty() {
        return None;
    }
    let m = reports.len() as f64;
    let avg = |f: fn(&DiversityReport) -> f64| reports.iter().map(f).sum::<f64>() / m;
    Some(DiversityReport {
        n: reports.iter().map(|r| r.n).sum(),
        occupancy: avg(|r| r.occupancy),
        entropy: avg(|r| r.entropy),
        hull_area: avg(|r| r.hull_area),
        clark_evans: avg(|r| r.clark_evans),
        mean_nn: avg(|r| r.mean_nn),
    })
}

/// Distinct occupied cells, for callers that need the cell set itself.
pub fn occupied_cells(ps: &PointSet2D, k: usize) -> BTreeSet<(usize, usize)> {
    cell_counts(ps, k).into_keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(points: &[[f64; 2]]) -> PointSet2D {
        PointSet2D::new(points.to_vec())
    }

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn random(n: usize, seed: u64) -> PointSet2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet2D::new((0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect())
    }

    const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    #[test]
    fn normalization_examples() {
        let out =
            normalize_per_continent(&[(gp(0.0, 0.0), Continent::Europe), (gp(10.0, 10.0), Continent::Europe)], "m");
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points, vec![[0.0, 0.0], [1.0, 1.0]]);
        assert_eq!(out[0].model_tag, "m");

        let single = normalize_per_continent(&[(gp(5.0, 5.0), Continent::Asia)], "m");
        assert_eq!(single[0].points, vec![[0.5, 0.5]]);

        let col = normalize_points(&[gp(0.0, 3.0), gp(10.0, 3.0), gp(5.0, 3.0)]);
        assert_eq!(col.iter().map(|p| p[1]).collect::<Vec<_>>(), [0.0, 1.0, 0.5]);
        assert!(col.iter().all(|p| p[0] == 0.5));

        let two = normalize_per_continent(&[(gp(1.0, 1.0), Continent::Asia), (gp(2.0, 2.0), Continent::Africa)], "m");
        assert_eq!(two.iter().map(|s| s.continent.unwrap()).collect::<Vec<_>>(), [Continent::Africa, Continent::Asia]);
    }

    #[test]
    fn occupancy_examples() {
        assert_abs_diff_eq!(occupancy_grid(&set(&[[0.01, 0.01], [0.02, 0.03]]), 16).unwrap(), 1.0 / 256.0);
        let every: Vec<_> =
            (0..256).map(|i| [((i % 16) as f64 + 0.5) / 16.0, ((i / 16) as f64 + 0.5) / 16.0]).collect();
        assert_eq!(occupancy_grid(&set(&every), 16).unwrap(), 1.0);
        assert_eq!(cell_of(1.0, 16), 15);
        assert_eq!(cell_of(0.0, 16), 0);
        assert!(occupancy_grid(&set(&every), 0).is_err());
    }

    #[test]
    fn occupancy_matches_double_loop_oracle() {
        let ps = random(10, 7);
        let k = 16;
        let mut occupied = 0;
        for cx in 0..k {
            for cy in 0..k {
                let (lo_x, hi_x) = (cx as f64 / k as f64, (cx + 1) as f64 / k as f64);
                let (lo_y, hi_y) = (cy as f64 / k as f64, (cy + 1) as f64 / k as f64);
                let inside = |v: f64, lo: f64, hi: f64, last: bool| v >= lo && (v < hi || (last && v <= hi));
                if ps
                    .points
                    .iter()
                    .any(|p| inside(p[0], lo_x, hi_x, cx == k - 1) && inside(p[1], lo_y, hi_y, cy == k - 1))
                {
                    occupied += 1;
                }
            }
        }
        assert_eq!(occupancy_grid(&ps, k).unwrap(), occupied as f64 / 256.0);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(grid_entropy(&set(&[[0.1, 0.1], [0.11, 0.1]]), 16).unwrap(), 0.0);
        let every: Vec<_> =
            (0..256).map(|i| [((i % 16) as f64 + 0.5) / 16.0, ((i / 16) as f64 + 0.5) / 16.0]).collect();
        assert_abs_diff_eq!(grid_entropy(&set(&every), 16).unwrap(), 1.0, epsilon = 1e-12);
        let split = set(&[[0.01, 0.01], [0.02, 0.02], [0.9, 0.9], [0.91, 0.91]]);
        assert_abs_diff_eq!(grid_entropy(&split, 16).unwrap(), 0.125, epsilon = 1e-12);
        assert!(grid_entropy(&set(&[]), 16).is_err());
    }

    /// Area of the hull spanned by the points found extremal by checking
    /// every ordered pair for a supporting line.
    fn brute_hull_area(points: &[[f64; 2]]) -> f64 {
        let n = points.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if points[i] == points[j] {
                    continue;
                }
                let all_left = (0..n).all(|k| cross(points[i], points[j], points[k]) >= 0.0);
                if all_left {
                    edges.push((points[i], points[j]));
                }
            }
        }
        // sum of signed trapezoids over supporting edges; collinear
        // sub-edges cancel or tile exactly
        let mut twice = 0.0;
        let mut seen = std::collections::HashSet::new();
        for (a, b) in edges {
            let interior = (0..n).any(|k| {
                let p = points[k];
                p != a && p != b && cross(a, b, p) == 0.0 && {
                    let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]))
                        / ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2));
                    t > 0.0 && t < 1.0
                }
            });
            if !interior && seen.insert((a[0].to_bits(), a[1].to_bits(), b[0].to_bits(), b[1].to_bits())) {
                twice += a[0] * b[1] - b[0] * a[1];
            }
        }
        twice.abs() / 2.0
    }

    #[test]
    fn hull_examples() {
        assert_eq!(hull_area(&set(&SQUARE)), 1.0);
        assert_eq!(hull_area(&set(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])), 0.5);
        assert_eq!(hull_area(&set(&[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])), 0.0);
        assert_eq!(hull_area(&set(&[[0.3, 0.3]])), 0.0);
        let with_interior = set(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]]);
        assert_eq!(hull_area(&with_interior), 1.0);
    }

    #[test]
    fn hull_matches_brute_force() {
        for seed in 0..5 {
            let ps = random(50, seed);
            assert_abs_diff_eq!(hull_area(&ps), brute_hull_area(&ps.points), epsilon = 1e-12);
        }
    }

    #[test]
    fn nearest_neighbor_examples() {
        assert_abs_diff_eq!(mean_nn(&set(&[[0.0, 0.0], [0.3, 0.4]])).unwrap(), 0.5);
        assert_eq!(mean_nn(&set(&SQUARE)).unwrap(), 1.0);
        assert_eq!(mean_nn(&set(&[[0.2, 0.2], [0.2, 0.2], [0.2, 0.2]])).unwrap(), 0.0);
        assert!(mean_nn(&set(&[[0.2, 0.2]])).is_err());
    }

    #[test]
    fn clark_evans_examples() {
        assert_eq!(clark_evans(&set(&[[0.4, 0.4]; 10]), 1.0).unwrap(), 0.0);

        let m = 8;
        let s = 0.1;
        let grid: Vec<_> = (0..m * m).map(|i| [(i % m) as f64 * s, (i / m) as f64 * s]).collect();
        let area = (m as f64 * s).powi(2);
        assert_abs_diff_eq!(clark_evans(&set(&grid), area).unwrap(), 2.0, epsilon = 1e-12);
        assert!(clark_evans(&set(&grid), 0.0).is_err());

        for trial in 0..20 {
            let r = clark_evans(&random(500, 1000 + trial), 1.0).unwrap();
            assert!((0.9..=1.15).contains(&r), "trial {trial}: R = {r}");
        }
        // the boundary correction enlarges the expected distance
        let ps = random(500, 3);
        let plain = clark_evans(&ps, 1.0).unwrap();
        let corrected = clark_evans_with(&ps, 1.0, EdgeCorrection::Donnelly { perimeter: 4.0 }).unwrap();
        assert!(corrected < plain);
    }

    #[test]
    fn clustered_versus_regular() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cluster: Vec<_> = (0..30)
            .map(|_| {
                let (r, t) = (0.05 * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * std::f64::consts::TAU);
                [0.5 + r * t.cos(), 0.5 + r * t.sin()]
            })
            .collect();
        assert!(clark_evans(&set(&cluster), 1.0).unwrap() < 0.5);
        let grid: Vec<_> = (0..100).map(|i| [((i % 10) as f64 + 0.5) / 10.0, ((i / 10) as f64 + 0.5) / 10.0]).collect();
        assert!(clark_evans(&set(&grid), 1.0).unwrap() > 1.5);
    }

    fn unit_points(min: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(x, y)| [x, y]), min..40)
    }

    fn symmetry(i: usize, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        match i {
            0 => [1.0 - y, x],
            1 => [1.0 - x, 1.0 - y],
            2 => [y, 1.0 - x],
            3 => [1.0 - x, y],
            4 => [x, 1.0 - y],
            5 => [y, x],
            _ => [1.0 - y, 1.0 - x],
        }
    }

    proptest! {
        #[test]
        fn permutation_invariance(pts in unit_points(2), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = diversity_report(&set(&pts), 16).unwrap();
            let b = diversity_report(&set(&shuffled), 16).unwrap();
            prop_assert_eq!(a.occupancy, b.occupancy);
            prop_assert!((a.entropy - b.entropy).abs() < 1e-12);
            prop_assert!((a.hull_area - b.hull_area).abs() < 1e-12);
            prop_assert!((a.mean_nn - b.mean_nn).abs() < 1e-12);
            prop_assert!((a.clark_evans - b.clark_evans).abs() < 1e-9);
        }

        #[test]
        fn square_symmetry_invariance(pts in unit_points(1), which in 0usize..7) {
            // cell-centered points avoid float ties on cell boundaries
            let snapped: Vec<_> = pts.iter().map(|p| p.map(|v| (cell_of(v, 16) as f64 + 0.5) / 16.0)).collect();
            let moved: Vec<_> = snapped.iter().map(|&p| symmetry(which, p)).collect();
            prop_assert_eq!(occupancy_grid(&set(&snapped), 16).unwrap(), occupancy_grid(&set(&moved), 16).unwrap());
            prop_assert!((grid_entropy(&set(&snapped), 16).unwrap() - grid_entropy(&set(&moved), 16).unwrap()).abs() < 1e-12);
            let moved_raw: Vec<_> = pts.iter().map(|&p| symmetry(which, p)).collect();
            prop_assert!((hull_area(&set(&pts)) - hull_area(&set(&moved_raw))).abs() < 1e-12);
        }

        #[test]
        fn hull_monotone_under_insertion(pts in unit_points(1), extra in (0.0f64..=1.0, 0.0f64..=1.0)) {
            let before = hull_area(&set(&pts));
            let mut more = pts.clone();
            more.push([extra.0, extra.1]);
            prop_assert!(hull_area(&set(&more)) >= before - 1e-12);
        }

        #[test]
        fn bounded_metrics(pts in unit_points(2)) {
            let r = diversity_report(&set(&pts), 16).unwrap();
            prop_assert!(r.occupancy > 0.0 && r.occupancy <= 1.0);
            prop_assert!((0.0..=1.0).contains(&r.entropy));
            prop_assert!((0.0..=1.0).contains(&r.hull_area));
            prop_assert!(r.clark_evans >= 0.0 && r.clark_evans.is_finite());
            let support = (pts.len().min(256) as f64).ln() / 256f64.ln();
            prop_assert!(r.entropy <= support + 1e-12);
        }
    }
}
