//! Live mapping client speaking the Amap web-service request shapes.
//!
//! | operation  | request                                                                  | fields read                                    |
//! |------------|--------------------------------------------------------------------------|------------------------------------------------|
//! | geocode    | `GET /v3/geocode/geo?address=…&key=…`                                    | `status`, `info`, `geocodes[0].location`       |
//! | walk/drive | `GET /v3/direction/{walking,driving}?origin=lon,lat&destination=lon,lat` | `route.paths[0].{distance,duration,steps[].instruction}` |
//! | transit    | `GET /v3/direction/transit/integrated?origin=…&destination=…&city=…`     | `route.transits[0].{distance,duration,segments}` |
//! | static map | `GET /v3/staticmap?size=…&markers=…&paths=…&key=…`                       | image body; JSON body on failure               |
//!
//! Amap reports coordinates as `"lon,lat"` and numbers as strings. A body
//! with `"status":"0"` is a provider rejection even under HTTP 200.

use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use super::mapping::{MapError, MapImage, MappingClient, RouteResult, TravelMode};
use super::GeoPoint;
use crate::http::{redact_url, HttpRequest, HttpResponse, HttpTransport, UreqTransport};
use crate::sync::{RateLimiter, Semaphore};

#[derive(Debug, Clone)]
pub struct AmapConfig {
    pub base_url: String,
    pub api_key: String,
    /// Required by the transit endpoint.
    pub city: Option<String>,
    pub max_in_flight: usize,
    pub min_interval: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl AmapConfig {
    pub fn new(api_key: impl Into<String>) -> Self {
        Self {
            base_url: "https://restapi.amap.com".into(),
            api_key: api_key.into(),
            city: None,
            max_in_flight: 4,
            min_interval: Duration::from_millis(100),
            retries: 2,
            backoff: Duration::from_millis(250),
        }
    }

    /// Reads `AMAP_API_KEY` (required), `AMAP_BASE_URL` and `AMAP_CITY`.
    pub fn from_env() -> Option<Self> {
        let key = std::env::var("AMAP_API_KEY").ok().filter(|k| !k.is_empty())?;
        let mut cfg = Self::new(key);
        if let Ok(base) = std::env::var("AMAP_BASE_URL") {
            cfg.base_url = base;
        }
        cfg.city = std::env::var("AMAP_CITY").ok().filter(|c| !c.is_empty());
        Some(cfg)
    }
}

pub struct AmapClient {
    config: AmapConfig,
    transport: Arc<dyn HttpTransport>,
    in_flight: Semaphore,
    limiter: RateLimiter,
}

fn lonlat(p: GeoPoint) -> String {
    format!("{:.6},{:.6}", p.lon, p.lat)
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn instruction_list(steps: Option<&Value>) -> Vec<String> {
    steps
        .and_then(Value::as_array)
        .map(|steps| {
            steps
                .iter()
                .filter_map(|s| s.get("instruction").and_then(Value::as_str))
                .map(str::to_owned)
                .collect()
        })
        .unwrap_or_default()
}

impl AmapClient {
    pub fn new(config: AmapConfig) -> Self {
        Self::with_transport(config, Arc::new(UreqTransport::default()))
    }

    pub fn with_transport(config: AmapConfig, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            in_flight: Semaphore::new(config.max_in_flight),
            limiter: RateLimiter::new(config.min_interval),
            config,
            transport,
        }
    }

    fn url(&self, path: &str, params: &[(&str, String)]) -> String {
        let base = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut url = url::Url::parse(&base).expect("valid Amap base url");
        {
            let mut q = url.query_pairs_mut();
            for (k, v) in params {
                q.append_pair(k, v);
            }
            q.append_pair("key", &self.config.api_key);
        }
        url.to_string()
    }

    fn fetch(&self, url: &str) -> Result<HttpResponse, MapError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.in_flight.acquire();
                self.limiter.wait();
                self.transport.send(&HttpRequest::get(url))
            };
            let outcome = match result {
                Err(e) => Err(MapError::Transport(e.0)),
                Ok(r) if r.status >= 500 => {
                    Err(MapError::Transport(format!("HTTP {}: {}", r.status, r.text())))
                }
                Ok(r) if r.status >= 400 => {
                    return Err(MapError::Provider { status: r.status, message: provider_message(&r) })
                }
                Ok(r) => return Ok(r),
            };
            match outcome {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    std::thread::sleep(self.config.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn fetch_json(&self, url: &str) -> Result<Value, MapError> {
        let r = self.fetch(url)?;
        let body: Value = serde_json::from_slice(&r.body)
            .map_err(|e| MapError::Decode(format!("{e}: {}", r.text())))?;
        if body.get("status").and_then(Value::as_str) == Some("0") {
            return Err(MapError::Provider { status: r.status, message: provider_message(&r) });
        }
        Ok(body)
    }
}

fn provider_message(r: &HttpResponse) -> String {
    match serde_json::from_slice::<Value>(&r.body) {
        Ok(v) => {
            let info = v.get("info").and_then(Value::as_str).unwrap_or("unknown error");
            match v.get("infocode").and_then(Value::as_str) {
                Some(code) => format!("{info} ({code})"),
                None => info.to_owned(),
            }
        }
        Err(_) => r.text(),
    }
}

impl MappingClient for AmapClient {
    fn geocode(&self, address: &str) -> Result<GeoPoint, MapError> {
        let mut params = vec![("address", address.to_owned())];
        if let Some(city) = &self.config.city {
            params.push(("city", city.clone()));
        }
        let body = self.fetch_json(&self.url("/v3/geocode/geo", &params))?;
        let location = body
            .get("geocodes")
            .and_then(Value::as_array)
            .and_then(|g| g.first())
            .and_then(|g| g.get("location"))
            .and_then(Value::as_str)
            .ok_or_else(|| MapError::NotFound(address.to_owned()))?;
        let (lon, lat) = location
            .split_once(',')
            .ok_or_else(|| MapError::Decode(format!("location `{location}`")))?;
        let lat = lat.trim().parse().map_err(|_| MapError::Decode(format!("location `{location}`")))?;
        let lon = lon.trim().parse().map_err(|_| MapError::Decode(format!("location `{location}`")))?;
        GeoPoint::new(lat, lon).map_err(|e| MapError::Decode(e.to_string()))
    }

    fn route(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        mode: TravelMode,
    ) -> Result<RouteResult, MapError> {
        let mut params = vec![("origin", lonlat(origin)), ("destination", lonlat(destination))];
        let path = match mode {
            TravelMode::Walk => "/v3/direction/walking",
            TravelMode::Drive => "/v3/direction/driving",
            TravelMode::Transit => {
                let city = self.config.city.clone().ok_or_else(|| {
                    MapError::Precondition("transit routing requires a configured city".into())
                })?;
                params.push(("city", city));
                "/v3/direction/transit/integrated"
            }
        };
        let body = self.fetch_json(&self.url(path, &params))?;
        let route = body.get("route").ok_or_else(|| MapError::Decode("missing `route`".into()))?;
        let no_route = || MapError::NoRoute { origin, destination, mode };

        let (distance, duration, steps) = if mode == TravelMode::Transit {
            let t = route
                .get("transits")
                .and_then(Value::as_array)
                .and_then(|t| t.first())
                .ok_or_else(no_route)?;
            let mut steps = Vec::new();
            for seg in t.get("segments").and_then(Value::as_array).into_iter().flatten() {
                steps.extend(instruction_list(seg.pointer("/walking/steps")));
                if let Some(line) = seg.pointer("/bus/buslines/0/name").and_then(Value::as_str) {
                    steps.push(format!("Take {line}"));
                }
            }
            (t.get("distance"), t.get("duration"), steps)
        } else {
            let p = route
                .get("paths")
                .and_then(Value::as_array)
                .and_then(|p| p.first())
                .ok_or_else(no_route)?;
            (p.get("distance"), p.get("duration"), instruction_list(p.get("steps")))
        };
        let distance = distance.and_then(number).ok_or_else(|| MapError::Decode("route distance".into()))?;
        let duration = duration.and_then(number).ok_or_else(|| MapError::Decode("route duration".into()))?;
        Ok(RouteResult { origin, destination, mode, distance, duration, steps, map_ref: None })
    }

    fn static_map(&self, route: &RouteResult) -> Result<MapImage, MapError> {
        let (a, b) = (lonlat(route.origin), lonlat(route.destination));
        let url = self.url(
            "/v3/staticmap",
            &[
                ("size", "750*400".to_owned()),
                ("markers", format!("mid,0x2da44e,A:{a}|mid,0xcf222e,B:{b}")),
                ("paths", format!("6,0x1f6feb,1,,:{a};{b}")),
            ],
        );
        let r = self.fetch(&url)?;
        let content_type = r.content_type.clone().unwrap_or_else(|| "image/png".into());
        if content_type.contains("json") {
            return Err(MapError::Provider { status: r.status, message: provider_message(&r) });
        }
        Ok(MapImage { map_ref: redact_url(&url), content_type, bytes: r.body })
    }
}
