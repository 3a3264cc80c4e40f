//! Serves a [`MockModel`] over the model wire protocol.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use cfprobe_core::model::MockModel;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
struct AnswerRequest {
    image_id: String,
    /// Accepted for protocol conformance; the mock ignores images.
    #[serde(default, rename = "image_url")]
    _image_url: Option<String>,
    question: String,
}

#[derive(Debug, Serialize)]
struct AnswerResponse {
    answer: String,
}

pub fn router(model: MockModel) -> Router {
    Router::new()
        .route("/answer", post(answer))
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .with_state(Arc::new(model))
}

async fn answer(State(model): State<Arc<MockModel>>, Json(req): Json<AnswerRequest>) -> Json<AnswerResponse> {
    Json(AnswerResponse {
        answer: model.lookup(&req.image_id, &req.question).to_owned(),
    })
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve_mock(model: MockModel, addr: SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Endpoint(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| CliError::Endpoint(e.to_string()))?;
    tracing::info!(%local, "serving mock model");
    axum::serve(listener, router(model))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Endpoint(e.to_string()))
}
