//! Read-only HTTP view over a catalog.
//!
//! | method | path             | body / query              | response            |
//! |--------|------------------|---------------------------|---------------------|
//! | GET    | `/api/hardware`  |                           | hardware list       |
//! | GET    | `/api/models`    |                           | model list          |
//! | GET    | `/api/records`   | `?model=`                 | measurement records |
//! | GET    | `/api/roofline`  | `?hw=&model=`             | ridge and points    |
//! | POST   | `/api/rank`      | [`RankRequest`]           | recommendation      |
//! | POST   | `/api/simulate`  | [`SimConfig`] or by name  | simulation report   |
//! | POST   | `/api/speedup`   | [`SpeedupRequest`]        | predicted speedup   |
//!
//! Bodies are the same pretty JSON documents the CLI prints with
//! `--format doc`. Unknown names answer 404, malformed or out-of-range input
//! 400 with the offending field.
//!
//! [`SimConfig`]: crate::sim::SimConfig

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use std::net::SocketAddr;
use std::sync::Arc;

use crate::api::{self, ErrorBody, FieldError, RankRequest, SimInput, SpeedupRequest};
use crate::catalog::Catalog;
use crate::error::Error;

type Shared = Arc<Catalog>;

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn ok<T: serde::Serialize>(v: &T) -> Response {
    json(StatusCode::OK, api::doc(v))
}

fn fail(e: &Error) -> Response {
    let status = match e {
        Error::Unknown { .. } => StatusCode::NOT_FOUND,
        Error::Calibration { .. } | Error::NonFinite { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    };
    json(status, api::doc(&ErrorBody::of(e)))
}

fn bad_field(e: &FieldError) -> Response {
    json(StatusCode::BAD_REQUEST, api::doc(&ErrorBody::field(e)))
}

fn reply<T: serde::Serialize>(r: crate::Result<T>) -> Response {
    match r {
        Ok(v) => ok(&v),
        Err(e) => fail(&e),
    }
}

fn body<T: serde::de::DeserializeOwned>(bytes: &Bytes) -> Result<T, FieldError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FieldError {
        field: ".".into(),
        message: "body is not UTF-8".into(),
    })?;
    api::from_str(text)
}

async fn hardware(State(cat): State<Shared>) -> Response {
    ok(&api::hardware(&cat))
}

async fn models(State(cat): State<Shared>) -> Response {
    ok(&api::models(&cat))
}

#[derive(Deserialize)]
struct RecordsQuery {
    model: Option<String>,
}

async fn records(State(cat): State<Shared>, Query(q): Query<RecordsQuery>) -> Response {
    reply(api::records(&cat, q.model.as_deref()))
}

#[derive(Deserialize)]
struct RooflineQuery {
    hw: Option<String>,
    model: Option<String>,
}

async fn roofline(State(cat): State<Shared>, Query(q): Query<RooflineQuery>) -> Response {
    let Some(hw) = q.hw else {
        return bad_field(&FieldError {
            field: "hw".into(),
            message: "missing query parameter".into(),
        });
    };
    reply(api::roofline(&cat, &hw, q.model.as_deref()))
}

async fn rank(State(cat): State<Shared>, bytes: Bytes) -> Response {
    match body::<RankRequest>(&bytes) {
        Ok(req) => reply(api::rank(&cat, &req)),
        Err(e) => bad_field(&e),
    }
}

async fn simulate(State(cat): State<Shared>, bytes: Bytes) -> Response {
    let input = body::<serde_json::Value>(&bytes).and_then(SimInput::from_json);
    match input {
        Ok(input) => reply(api::simulate(&cat, &input)),
        Err(e) => bad_field(&e),
    }
}

async fn speedup(State(cat): State<Shared>, bytes: Bytes) -> Response {
    match body::<SpeedupRequest>(&bytes) {
        Ok(req) => reply(api::speedup(&cat, &req)),
        Err(e) => bad_field(&e),
    }
}

async fn not_found() -> Response {
    fail(&Error::Unknown {
        kind: "endpoint",
        name: "requested path".into(),
    })
}

pub fn router(catalog: Catalog) -> Router {
    Router::new()
        .route("/api/hardware", get(hardware))
        .route("/api/models", get(models))
        .route("/api/records", get(records))
        .route("/api/roofline", get(roofline))
        .route("/api/rank", post(rank))
        .route("/api/simulate", post(simulate))
        .route("/api/speedup", post(speedup))
        .fallback(not_found)
        .with_state(Arc::new(catalog))
}

/// Bind and serve until the process is stopped.
pub async fn serve(catalog: Catalog, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(catalog)).await
}
