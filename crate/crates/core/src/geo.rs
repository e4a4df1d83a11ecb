//! Great-circle geometry and the exponential geo score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Distance scale of the geo score: `score = 100 * exp(-10 x / SCORE_SCALE_KM)`.
pub const SCORE_SCALE_KM: f64 = 18050.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("non-finite coordinate ({lat}, {lon})")]
    NonFinite { lat: f64, lon: f64 },
    #[error("negative distance {0} km")]
    NegativeDistance(f64),
    #[error("bearing between coincident points is undefined")]
    CoincidentPoints,
    #[error("cannot aggregate an empty sample list")]
    Empty,
}

/// A WGS-84 latitude/longitude pair in degrees.
///
/// Longitude is canonicalized to `[-180, 180)` on construction so that two
/// points describing the same place compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;
    fn try_from(raw: RawPoint) -> Result<Self, GeoError> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::NonFinite { lat, lon });
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        Ok(Self { lat, lon: canonical_lon(lon) })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

fn canonical_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        return lon;
    }
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Great-circle distance using the haversine formula with [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    haversine_with_radius(a, b, EARTH_RADIUS_KM)
}

pub fn haversine_with_radius(a: GeoPoint, b: GeoPoint, radius_km: f64) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * radius_km * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Initial great-circle bearing from `a` to `b`, degrees in `[0, 360)`.
pub fn bearing_deg(a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
    if a == b {
        return Err(GeoError::CoincidentPoints);
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    Ok(wrap_degrees(y.atan2(x).to_degrees()))
}

/// Smallest absolute difference between two headings, in `[0, 180]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = wrap_degrees(a - b);
    d.min(360.0 - d)
}

/// Geo score in `(0, 100]` for a great-circle error of `distance_km`.
pub fn geo_score(distance_km: f64) -> Result<f64, GeoError> {
    if distance_km < 0.0 || distance_km.is_nan() {
        return Err(GeoError::NegativeDistance(distance_km));
    }
    Ok(100.0 * (-10.0 * distance_km / SCORE_SCALE_KM).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean_distance_km: f64,
    /// Mean of per-sample scores, not the score of the mean distance.
    pub mean_score: f64,
    pub n: usize,
}

pub fn aggregate_scores(distances_km: &[f64]) -> Result<ScoreSummary, GeoError> {
    if distances_km.is_empty() {
        return Err(GeoError::Empty);
    }
    let n = distances_km.len() as f64;
    let mut dist_sum = 0.0;
    let mut score_sum = 0.0;
    for &d in distances_km {
        score_sum += geo_score(d)?;
        dist_sum += d;
    }
    Ok(ScoreSummary { mean_distance_km: dist_sum / n, mean_score: score_sum / n, n: distances_km.len() })
}

/// Min-max scaling onto `[0, 1]`. A constant input maps to all zeros.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}
