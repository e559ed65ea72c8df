use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{haversine, EarthModel, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TravelMode {
    Walk,
    Drive,
    Transit,
}

impl TravelMode {
    /// Nominal speed used by the offline router, in m/s.
    pub fn speed_mps(self) -> f64 {
        match self {
            TravelMode::Walk => 1.4,
            TravelMode::Drive => 8.3,
            TravelMode::Transit => 5.6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TravelMode::Walk => "walk",
            TravelMode::Drive => "drive",
            TravelMode::Transit => "transit",
        }
    }
}

impl fmt::Display for TravelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TravelMode {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" | "walking" => Ok(TravelMode::Walk),
            "drive" | "driving" => Ok(TravelMode::Drive),
            "transit" => Ok(TravelMode::Transit),
            other => Err(MapError::Precondition(format!("unsupported travel mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub mode: TravelMode,
    /// Meters.
    pub distance: f64,
    /// Seconds.
    pub duration: f64,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_ref: Option<String>,
}

/// A rendered static map and the handle it is known by.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapImage {
    pub map_ref: String,
    pub content_type: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("invalid mapping request: {0}")]
    Precondition(String),
    #[error("address `{0}` could not be resolved")]
    NotFound(String),
    #[error("no {mode} route from {origin} to {destination}")]
    NoRoute { origin: GeoPoint, destination: GeoPoint, mode: TravelMode },
    #[error("mapping service unreachable: {0}")]
    Transport(String),
    #[error("mapping provider rejected the request (HTTP {status}): {message}")]
    Provider { status: u16, message: String },
    #[error("unexpected mapping response: {0}")]
    Decode(String),
}

impl MapError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, MapError::Transport(_))
    }
}

/// A mapping backend: geocoding, routing and static-map rendering.
pub trait MappingClient: Send + Sync {
    fn geocode(&self, address: &str) -> Result<GeoPoint, MapError>;
    fn route(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        mode: TravelMode,
    ) -> Result<RouteResult, MapError>;
    fn static_map(&self, route: &RouteResult) -> Result<MapImage, MapError>;
}

pub fn geocode(address: &str, client: &dyn MappingClient) -> Result<GeoPoint, MapError> {
    let address = address.trim();
    if address.is_empty() {
        return Err(MapError::Precondition("address is empty".into()));
    }
    client.geocode(address)
}

fn check_point(p: GeoPoint) -> Result<GeoPoint, MapError> {
    GeoPoint::new(p.lat, p.lon).map_err(|e| MapError::Precondition(e.to_string()))
}

pub fn plan_route(
    origin: GeoPoint,
    destination: GeoPoint,
    mode: TravelMode,
    client: &dyn MappingClient,
) -> Result<RouteResult, MapError> {
    client.route(check_point(origin)?, check_point(destination)?, mode)
}

/// Renders `route` and returns the image; the caller stores `map_ref` back
/// on the route if it keeps one.
pub fn render_static_map(
    route: &RouteResult,
    client: &dyn MappingClient,
) -> Result<MapImage, MapError> {
    check_point(route.origin)?;
    check_point(route.destination)?;
    client.static_map(route)
}

/// Deterministic stand-in for a mapping provider: geocodes from a fixture
/// table, routes along the great circle and renders an SVG placeholder.
#[derive(Debug, Clone)]
pub struct OfflineMapping {
    places: BTreeMap<String, GeoPoint>,
    model: EarthModel,
    /// Pairs further apart than this are reported unroutable.
    max_route_m: f64,
}

#[derive(Deserialize)]
struct PlaceFixture {
    address: String,
    lat: f64,
    lon: f64,
}

const BUNDLED_PLACES: &str = include_str!("../../data/geocode_fixtures.json");

fn normalize_address(a: &str) -> String {
    a.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

impl OfflineMapping {
    pub fn new(places: impl IntoIterator<Item = (String, GeoPoint)>) -> Self {
        Self {
            places: places.into_iter().map(|(a, p)| (normalize_address(&a), p)).collect(),
            model: EarthModel::default(),
            max_route_m: 2_000_000.0,
        }
    }

    /// Parses a JSON array of `{address, lat, lon}` objects.
    pub fn from_fixture_json(json: &str) -> Result<Self, MapError> {
        let rows: Vec<PlaceFixture> =
            serde_json::from_str(json).map_err(|e| MapError::Decode(e.to_string()))?;
        let mut places = Vec::with_capacity(rows.len());
        for r in rows {
            places.push((r.address, check_point(GeoPoint { lat: r.lat, lon: r.lon })?));
        }
        Ok(Self::new(places))
    }

    pub fn bundled() -> Self {
        Self::from_fixture_json(BUNDLED_PLACES).expect("bundled geocode fixtures are valid")
    }

    pub fn with_place(mut self, address: &str, point: GeoPoint) -> Self {
        self.places.insert(normalize_address(address), point);
        self
    }

    pub fn with_max_route(mut self, meters: f64) -> Self {
        self.max_route_m = meters;
        self
    }
}

impl MappingClient for OfflineMapping {
    fn geocode(&self, address: &str) -> Result<GeoPoint, MapError> {
        self.places
            .get(&normalize_address(address))
            .copied()
            .ok_or_else(|| MapError::NotFound(address.to_owned()))
    }

    fn route(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        mode: TravelMode,
    ) -> Result<RouteResult, MapError> {
        let distance = haversine(origin, destination, self.model);
        if distance > self.max_route_m {
            return Err(MapError::NoRoute { origin, destination, mode });
        }
        let step = if distance == 0.0 {
            "You are already at the destination".to_owned()
        } else {
            format!("Travel {distance:.0} m by {mode} from {origin} to {destination}")
        };
        Ok(RouteResult {
            origin,
            destination,
            mode,
            distance,
            duration: distance / mode.speed_mps(),
            steps: vec![step],
            map_ref: None,
        })
    }

    fn static_map(&self, route: &RouteResult) -> Result<MapImage, MapError> {
        let bytes = placeholder_svg(route).into_bytes();
        let digest = hex::encode(Sha256::digest(&bytes));
        Ok(MapImage {
            map_ref: format!("offline:{}", &digest[..32]),
            content_type: "image/svg+xml".into(),
            bytes,
        })
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn placeholder_svg(route: &RouteResult) -> String {
    let (a, b) = (route.origin, route.destination);
    let span_lon = (b.lon - a.lon).abs().max(1e-9);
    let span_lat = (b.lat - a.lat).abs().max(1e-9);
    let scale = ((WIDTH - 2.0 * MARGIN) / span_lon).min((HEIGHT - 2.0 * MARGIN) / span_lat);
    let mid_lon = (a.lon + b.lon) / 2.0;
    let mid_lat = (a.lat + b.lat) / 2.0;
    let project = |p: GeoPoint| {
        (WIDTH / 2.0 + (p.lon - mid_lon) * scale, HEIGHT / 2.0 - (p.lat - mid_lat) * scale)
    };
    let (x1, y1) = project(a);
    let (x2, y2) = project(b);
    let meta = serde_json::json!({
        "origin": {"lat": a.lat, "lon": a.lon},
        "destination": {"lat": b.lat, "lon": b.lon},
        "mode": route.mode,
        "distance_m": route.distance,
    });
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<metadata>{meta}</metadata>\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"#eef2f5\"/>\n",
            "<line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" stroke=\"#1f6feb\" stroke-width=\"4\" stroke-dasharray=\"8 6\"/>\n",
            "<circle cx=\"{x1:.1}\" cy=\"{y1:.1}\" r=\"8\" fill=\"#2da44e\"/>\n",
            "<circle cx=\"{x2:.1}\" cy=\"{y2:.1}\" r=\"8\" fill=\"#cf222e\"/>\n",
            "<text x=\"12\" y=\"24\" font-family=\"monospace\" font-size=\"14\">A {a}</text>\n",
            "<text x=\"12\" y=\"44\" font-family=\"monospace\" font-size=\"14\">B {b}</text>\n",
            "<text x=\"12\" y=\"{bottom}\" font-family=\"monospace\" font-size=\"14\">{mode} {dist:.0} m</text>\n",
            "</svg>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        meta = meta,
        x1 = x1,
        y1 = y1,
        x2 = x2,
        y2 = y2,
        a = a,
        b = b,
        bottom = HEIGHT - 14.0,
        mode = route.mode,
        dist = route.distance,
    )
}
