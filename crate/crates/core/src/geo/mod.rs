//! Navigator: great-circle distance, candidate annotation and mapping
//! services.

mod amap;
mod mapping;

pub use amap::{AmapClient, AmapConfig};
pub use mapping::{
    geocode, plan_route, render_static_map, MapError, MapImage, MappingClient, OfflineMapping,
    RouteResult, TravelMode,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{valid_coordinates, CandidatePoi, Poi, PoiId};

/// Mean Earth radius in meters.
pub const MEAN_EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("coordinates ({lat}, {lon}) are outside the valid range")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("POI `{0}` is not in the POI table")]
    UnknownPoi(PoiId),
    #[error("candidate set size must be at least 1")]
    EmptyCandidateSet,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if valid_coordinates(lat, lon) {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinates { lat, lon })
        }
    }

    pub fn of(poi: &Poi) -> Self {
        Self { lat: poi.lat, lon: poi.lon }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6},{:.6}", self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    pub radius_m: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self { radius_m: MEAN_EARTH_RADIUS_M }
    }
}

/// Central angle between two points in radians (haversine form).
pub fn angular_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let d_phi = (b.lat - a.lat).to_radians();
    let d_lambda = (b.lon - a.lon).to_radians();
    let h = (d_phi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (d_lambda / 2.0).sin().powi(2);
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Great-circle distance in meters.
pub fn haversine(a: GeoPoint, b: GeoPoint, model: EarthModel) -> f64 {
    model.radius_m * angular_distance(a, b)
}

/// The `m_prime` POIs nearest to `origin`, ascending by distance and then
/// by id.
pub fn nearest_candidates<'a>(
    origin: GeoPoint,
    pois: impl IntoIterator<Item = &'a Poi>,
    m_prime: usize,
    model: EarthModel,
) -> Result<Vec<CandidatePoi>, GeoError> {
    if m_prime == 0 {
        return Err(GeoError::EmptyCandidateSet);
    }
    let mut scored: Vec<(f64, &Poi)> = pois
        .into_iter()
        .map(|p| (haversine(origin, GeoPoint::of(p), model), p))
        .collect();
    scored.sort_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(m_prime);
    Ok(scored
        .into_iter()
        .map(|(d, p)| CandidatePoi {
            poi_id: p.id.clone(),
            distance_to_last: d,
            category: p.category.clone(),
        })
        .collect())
}

/// Candidate set `C_u` around the last visited POI. The last POI is itself a
/// candidate, since revisits are legitimate next visits.
pub fn annotate_candidates(
    last_poi: &Poi,
    pois: &BTreeMap<PoiId, Poi>,
    m_prime: usize,
    model: EarthModel,
) -> Result<Vec<CandidatePoi>, GeoError> {
    if !pois.contains_key(last_poi.id.as_str()) {
        return Err(GeoError::UnknownPoi(last_poi.id.clone()));
    }
    nearest_candidates(GeoPoint::of(last_poi), pois.values(), m_prime, model)
}
