//! JSON-over-HTTP survey endpoints.
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/api/surveys` | 201 `{survey_id, n_items}` |
//! | GET | `/api/surveys/{id}/items` | 200 `[{item_id}]` |
//! | GET | `/api/items/{item_id}/image?wc=&ww=` | 200 8-bit grayscale PNG |
//! | POST | `/api/surveys/{id}/responses` | 204 |
//! | GET | `/api/surveys/{id}/stats` | 200 stats JSON |
//!
//! When a token is configured every request needs `Authorization: Bearer <token>`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::service::{load_pool, make_survey, RecordError, SurveyStore};
use super::Judgment;
use crate::error::Error;
use crate::imaging::window_to_8bit;

pub const DEFAULT_WINDOW_CENTER: f64 = 40.0;
pub const DEFAULT_WINDOW_WIDTH: f64 = 400.0;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SurveyStore>,
    pub token: Option<Arc<str>>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": kind, "message": message.into() }))).into_response()
}

fn domain_error(e: &Error) -> Response {
    let status = match e {
        Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    error(status, e.kind(), e.to_string())
}

async fn auth(State(state): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == &**token);
        if !ok {
            return error(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or invalid bearer token");
        }
    }
    next.run(req).await
}

#[derive(Debug, Deserialize)]
struct CreateSurvey {
    real_manifest: PathBuf,
    synth_manifest: PathBuf,
    n_real: usize,
    n_synth: usize,
    seed: u64,
}

async fn create_survey(State(state): State<AppState>, Json(body): Json<CreateSurvey>) -> Response {
    let store = state.store.clone();
    let result = tokio::task::spawn_blocking(move || {
        let real_path = std::fs::canonicalize(&body.real_manifest).map_err(|e| Error::io(&body.real_manifest, e))?;
        let synth_path = std::fs::canonicalize(&body.synth_manifest).map_err(|e| Error::io(&body.synth_manifest, e))?;
        let real = load_pool(&real_path)?;
        let synth = load_pool(&synth_path)?;
        let mut def = make_survey(&real, &synth, body.n_real, body.n_synth, body.seed)?;
        def.real_manifest = Some(real_path);
        def.synth_manifest = Some(synth_path);
        store.insert(def, Some((real, synth)))
    })
    .await;
    match result {
        Ok(Ok(entry)) => (
            StatusCode::CREATED,
            Json(json!({ "survey_id": entry.definition.survey_id, "n_items": entry.definition.items.len() })),
        )
            .into_response(),
        Ok(Err(e @ Error::Io { .. })) => error(StatusCode::UNPROCESSABLE_ENTITY, e.kind(), e.to_string()),
        Ok(Err(e)) => domain_error(&e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()),
    }
}

#[derive(Serialize)]
struct ItemView<'a> {
    item_id: &'a str,
}

async fn list_items(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(entry) = state.store.get(&id) else {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("unknown survey {id}"));
    };
    let items: Vec<ItemView> = entry
        .definition
        .items
        .iter()
        .map(|i| ItemView { item_id: &i.item_id })
        .collect();
    Json(items).into_response()
}

#[derive(Debug, Deserialize)]
struct WindowQuery {
    wc: Option<f64>,
    ww: Option<f64>,
}

/// Encodes an 8-bit grayscale image as PNG.
pub fn encode_png_gray8(pixels: &ndarray::Array2<u8>) -> Vec<u8> {
    let (rows, cols) = pixels.dim();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, cols as u32, rows as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        let data: Vec<u8> = pixels.iter().copied().collect();
        w.write_image_data(&data).expect("in-memory PNG data");
    }
    out
}

async fn item_image(State(state): State<AppState>, Path(item_id): Path<String>, Query(q): Query<WindowQuery>) -> Response {
    let Some(entry) = state.store.find_item(&item_id) else {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("unknown item {item_id}"));
    };
    let (wc, ww) = (q.wc.unwrap_or(DEFAULT_WINDOW_CENTER), q.ww.unwrap_or(DEFAULT_WINDOW_WIDTH));
    let result = tokio::task::spawn_blocking(move || {
        let slice = entry.slice(&item_id)?;
        window_to_8bit(&slice, wc, ww).map(|px| encode_png_gray8(&px))
    })
    .await;
    match result {
        Ok(Ok(png)) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Ok(Err(e)) => domain_error(&e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct ResponseBody {
    rater_id: String,
    item_id: String,
    judgment: String,
    #[serde(default)]
    rationale: Option<String>,
}

async fn post_response(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(entry) = state.store.get(&id) else {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("unknown survey {id}"));
    };
    let value: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, "BadRequest", e.to_string()),
    };
    let body: ResponseBody = match serde_json::from_value(value) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "InvalidResponse", e.to_string()),
    };
    let Some(judgment) = Judgment::from_label(&body.judgment) else {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidJudgment",
            format!("judgment must be real, synthetic or indeterminable, got {:?}", body.judgment),
        );
    };
    if body.rater_id.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "InvalidResponse", "rater_id is empty");
    }
    let result =
        tokio::task::spawn_blocking(move || entry.record(&body.rater_id, &body.item_id, judgment, body.rationale)).await;
    match result {
        Ok(Ok(())) => StatusCode::NO_CONTENT.into_response(),
        Ok(Err(e @ (RecordError::UnknownItem(_) | RecordError::UnknownSurvey(_)))) => {
            error(StatusCode::NOT_FOUND, "NotFound", e.to_string())
        }
        Ok(Err(e @ RecordError::Duplicate { .. })) => error(StatusCode::CONFLICT, "Duplicate", e.to_string()),
        Ok(Err(RecordError::Store(e))) => domain_error(&e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()),
    }
}

async fn survey_stats(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(entry) = state.store.get(&id) else {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("unknown survey {id}"));
    };
    if entry.num_responses() == 0 {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "InvalidParameter", "no responses recorded yet");
    }
    match entry.stats() {
        Ok(s) => Json(s).into_response(),
        Err(e) => domain_error(&e),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/surveys", post(create_survey))
        .route("/api/surveys/{id}/items", get(list_items))
        .route("/api/surveys/{id}/responses", post(post_response))
        .route("/api/surveys/{id}/stats", get(survey_stats))
        .route("/api/items/{item_id}/image", get(item_image))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
