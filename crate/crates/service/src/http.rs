use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use dbh_core::service::{decode_line, encode, sniff_request_id, ErrorReply, Message, ServiceContext};
use dbh_core::{Error, ErrorCode};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::{stopped, ServerError};

type Ctx = Arc<ServiceContext>;

pub(crate) fn status_for(code: Option<ErrorCode>) -> StatusCode {
    match code {
        None => StatusCode::OK,
        Some(c) if c.is_protocol() || c == ErrorCode::InvalidInput => StatusCode::BAD_REQUEST,
        Some(ErrorCode::ProviderUnavailable) => StatusCode::SERVICE_UNAVAILABLE,
        Some(_) => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn json(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn to_json<T: serde::Serialize>(status: StatusCode, value: &T) -> Response {
    json(status, serde_json::to_vec(value).expect("protocol types serialize infallibly"))
}

fn bad_request(body: &[u8], e: Error) -> Response {
    let request_id =
        serde_json::from_slice::<Value>(body).ok().and_then(|v| v.get("request_id")?.as_str().map(str::to_owned));
    to_json(StatusCode::BAD_REQUEST, &ErrorReply::from_error(request_id, &e))
}

fn payload<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(body).map_err(|e| Error::Protocol(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        log::error!("request handler panicked: {e}");
        StatusCode::INTERNAL_SERVER_ERROR.into_response()
    })
}

async fn health(State(ctx): State<Ctx>) -> Response {
    to_json(StatusCode::OK, &ctx.handle_health())
}

async fn measure(State(ctx): State<Ctx>, body: Bytes) -> Response {
    let req = match payload(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(&body, e),
    };
    match blocking(move || ctx.handle_measure(&req)).await {
        Ok(resp) => to_json(status_for(resp.status.error_code()), &resp),
        Err(r) => r,
    }
}

async fn segment(State(ctx): State<Ctx>, body: Bytes) -> Response {
    let req = match payload(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(&body, e),
    };
    match blocking(move || ctx.handle_segment(&req)).await {
        Ok(resp) => to_json(status_for(resp.status.error_code()), &resp),
        Err(r) => r,
    }
}

/// One envelope in, one envelope out; the reply keeps its trailing newline.
async fn message(State(ctx): State<Ctx>, body: Bytes) -> Response {
    let line = body.strip_suffix(b"\n").unwrap_or(&body);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let reply = match decode_line(line) {
        Ok(m) => match blocking(move || ctx.handle_message(&m)).await {
            Ok(reply) => reply,
            Err(r) => return r,
        },
        Err(e) => Message::Error(ErrorReply::from_error(sniff_request_id(line), &e)),
    };
    let code = match &reply {
        Message::MeasureResponse(r) => r.status.error_code(),
        Message::SegmentResponse(r) => r.status.error_code(),
        Message::Error(e) => Some(ErrorCode::parse(&e.code).unwrap_or(ErrorCode::Protocol)),
        _ => None,
    };
    json(status_for(code), encode(&reply))
}

async fn preflight() -> impl IntoResponse {
    (
        StatusCode::NO_CONTENT,
        [
            (header::ACCESS_CONTROL_ALLOW_METHODS, "GET, POST, OPTIONS"),
            (header::ACCESS_CONTROL_ALLOW_HEADERS, "content-type"),
        ],
    )
}

pub(crate) fn router(ctx: Ctx, max_payload: usize, cors_origin: Option<HeaderValue>) -> Router {
    let app = Router::new()
        .route("/v1/health", get(health).options(preflight))
        .route("/v1/measure", post(measure).options(preflight))
        .route("/v1/segment", post(segment).options(preflight))
        .route("/v1/message", post(message).options(preflight))
        .layer(DefaultBodyLimit::max(max_payload))
        .with_state(ctx);
    match cors_origin {
        Some(origin) => app.layer(axum::middleware::map_response(move |mut res: Response| {
            let origin = origin.clone();
            async move {
                res.headers_mut().insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, origin);
                res
            }
        })),
        None => app,
    }
}

pub(crate) async fn serve(listener: TcpListener, app: Router, rx: watch::Receiver<bool>) -> Result<(), ServerError> {
    axum::serve(listener, app).with_graceful_shutdown(stopped(rx)).await?;
    Ok(())
}
