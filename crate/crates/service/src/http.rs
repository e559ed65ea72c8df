use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tower_http::services::ServeDir;

use crate::api::{CreateSessionResponse, ErrorBody, ErrorDetail};
use crate::{ServiceError, SessionService};

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Required as `Authorization: Bearer <token>` on every `/v1` call.
    pub api_token: Option<String>,
    /// Static files served outside `/v1`, such as the browser client.
    pub static_dir: Option<PathBuf>,
}

struct ApiError(ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::State(_) | ServiceError::Busy(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Agent { .. } => StatusCode::BAD_GATEWAY,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let agent = match &self.0 {
            ServiceError::Agent { agent, .. } => Some(*agent),
            _ => None,
        };
        let body = ErrorBody { error: ErrorDetail { code: self.0.code().into(), message: self.0.to_string(), agent } };
        (status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError(ServiceError::BadRequest(e.to_string())))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Storage(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

type Svc = State<Arc<SessionService>>;

async fn create_session(State(svc): Svc, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req = parse(&body)?;
    let session = blocking(move || svc.create_session(req)).await?;
    Ok((StatusCode::CREATED, Json(CreateSessionResponse { session_id: session.session_id.clone(), session })))
}

async fn post_message(State(svc): Svc, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req = parse(&body)?;
    Ok(Json(blocking(move || svc.post_message(&id, req)).await?))
}

async fn get_session(State(svc): Svc, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || svc.get_session(&id)).await?))
}

async fn get_asset(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    let asset = blocking(move || svc.get_map_asset(&id)).await?;
    let ct = HeaderValue::from_str(&asset.content_type)
        .unwrap_or_else(|_| HeaderValue::from_static("application/octet-stream"));
    Ok(([(header::CONTENT_TYPE, ct), (header::CACHE_CONTROL, HeaderValue::from_static("immutable"))], Body::from(asset.bytes))
        .into_response())
}

async fn require_token(State(token): State<Arc<String>>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token.as_str());
    if ok {
        return next.run(req).await;
    }
    let body = ErrorBody {
        error: ErrorDetail { code: "unauthorized".into(), message: "missing or wrong bearer token".into(), agent: None },
    };
    (StatusCode::UNAUTHORIZED, Json(body)).into_response()
}

pub fn router(service: Arc<SessionService>, options: &ServerOptions) -> Router {
    let mut v1 = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/assets/{id}", get(get_asset))
        .with_state(service);
    if let Some(token) = &options.api_token {
        v1 = v1.layer(middleware::from_fn_with_state(Arc::new(token.clone()), require_token));
    }
    match &options.static_dir {
        Some(dir) => v1.fallback_service(ServeDir::new(dir)),
        None => v1,
    }
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
