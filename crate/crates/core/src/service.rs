//! HTTP API over an [`Engine`].
//!
//! | route            | body / query                          | response        |
//! |------------------|---------------------------------------|-----------------|
//! | `GET /health`    |                                       | status, docs    |
//! | `GET /search`    | `session_id`, `q`, paging, filters    | result page     |
//! | `GET /doc/{id}`  | `session_id`                          | document, links |
//! | `POST /browse`   | stratagem, seed, paging, filters      | result page     |
//! | `POST /event`    | client event                          | ack             |
//!
//! Responses never reveal the session's experiment arm.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::engine::{BrowseRequest, BrowseResponse, ClientEvent, DocDetail, Engine, EngineError, Page, PostFilter};
use crate::ranking::RankingError;
use crate::session::{Ack, SessionError};

pub struct ApiError(EngineError);

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError(e)
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match &self.0 {
            EngineError::EmptyQuery | EngineError::InvalidPage => StatusCode::BAD_REQUEST,
            EngineError::UnknownDocument(_) => StatusCode::NOT_FOUND,
            EngineError::Ranking(RankingError::UnknownSeed(_)) => StatusCode::NOT_FOUND,
            EngineError::Ranking(RankingError::EmptyValue | RankingError::UnknownKind(_)) => {
                StatusCode::BAD_REQUEST
            }
            EngineError::Ranking(RankingError::Io(_)) => StatusCode::INTERNAL_SERVER_ERROR,
            EngineError::Session(SessionError::ArmMismatch { .. }) => StatusCode::CONFLICT,
            EngineError::Session(SessionError::Invalid(_) | SessionError::UnknownArm(_)) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            EngineError::Session(SessionError::Io(_)) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Deserialize)]
pub struct SearchParams {
    pub session_id: String,
    pub q: String,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
    pub year_from: Option<i32>,
    pub year_to: Option<i32>,
    pub language: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct DocParams {
    pub session_id: String,
}

async fn health(State(engine): State<Arc<Engine>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "documents": engine.index().doc_count() }))
}

async fn search(
    State(engine): State<Arc<Engine>>,
    Query(p): Query<SearchParams>,
) -> Result<Json<BrowseResponse>, ApiError> {
    let default = Page::default();
    let page = Page::new(p.page.unwrap_or(default.page), p.page_size.unwrap_or(default.page_size));
    let filters = PostFilter {
        year_from: p.year_from,
        year_to: p.year_to,
        language: p.language,
    };
    Ok(Json(engine.search(&p.session_id, &p.q, page, &filters, now_ms())?))
}

async fn doc(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(p): Query<DocParams>,
) -> Result<Json<DocDetail>, ApiError> {
    Ok(Json(engine.view_doc(&p.session_id, &id, now_ms())?))
}

async fn browse(
    State(engine): State<Arc<Engine>>,
    Json(req): Json<BrowseRequest>,
) -> Result<Json<BrowseResponse>, ApiError> {
    Ok(Json(engine.browse(&req, now_ms())?))
}

async fn event(State(engine): State<Arc<Engine>>, Json(ev): Json<ClientEvent>) -> Result<Json<Ack>, ApiError> {
    Ok(Json(engine.record(ev, now_ms())?))
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/search", get(search))
        .route("/doc/{id}", get(doc))
        .route("/browse", post(browse))
        .route("/event", post(event))
        .with_state(engine)
}

/// Serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
