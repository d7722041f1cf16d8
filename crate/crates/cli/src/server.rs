//! Plain HTTP front of [`Service`]. No TLS and no authentication; intended
//! for local use.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Result;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use trirng_core::rayleigh::OUTPUT_LABEL;
use trirng_core::service::{OutputType, Service, TakeError};

pub const OFFSET_HEADER: &str = "x-trirng-offset";
pub const TYPE_HEADER: &str = "x-trirng-type";
pub const LABEL_HEADER: &str = "x-trirng-label";

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn random(
    State(svc): State<Arc<Service>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let kind = match params
        .get("type")
        .map(String::as_str)
        .unwrap_or("uniform")
        .parse::<OutputType>()
    {
        Ok(k) => k,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let bytes = match params.get("bytes").map(|b| b.parse::<usize>()) {
        Some(Ok(n)) => n,
        Some(Err(_)) => {
            return error(
                StatusCode::BAD_REQUEST,
                "bytes must be a non-negative integer",
            )
        }
        None => return error(StatusCode::BAD_REQUEST, "missing bytes parameter"),
    };
    match svc.take(kind, bytes) {
        Ok(served) => {
            let mut resp = served.data.into_response();
            let h = resp.headers_mut();
            h.insert(
                header::CONTENT_TYPE,
                HeaderValue::from_static(kind.content_type()),
            );
            h.insert(
                TYPE_HEADER,
                HeaderValue::from_str(&kind.to_string()).expect("ascii"),
            );
            h.insert(OFFSET_HEADER, HeaderValue::from(served.offset));
            if kind == OutputType::Rayleigh {
                h.insert(LABEL_HEADER, HeaderValue::from_static(OUTPUT_LABEL));
            }
            resp
        }
        Err(TakeError::BadRequest(m)) => error(StatusCode::BAD_REQUEST, m),
        Err(e @ TakeError::Unavailable { .. }) => {
            let mut resp = error(StatusCode::SERVICE_UNAVAILABLE, e.to_string());
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
            resp
        }
    }
}

async fn health(State(svc): State<Arc<Service>>) -> Response {
    Json(svc.health()).into_response()
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/random", get(random))
        .route("/health", get(health))
        .with_state(svc)
}

/// Serves until `shutdown` resolves, then stops the pipeline.
pub async fn serve(
    svc: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, router(svc.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    tokio::task::spawn_blocking(move || svc.shutdown()).await?;
    Ok(())
}
