//! HTTP binding of the router. Every request funnels through one lock, so
//! mutations are applied one at a time in arrival order.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body};
use axum::extract::Request;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Router;
use rcm_core::persistence::LogStore;

use crate::router::{split_query, ApiError, ApiRequest, ApiResponse, Method, Service, ACTOR_HEADER};

/// Largest request body accepted.
pub const MAX_BODY_BYTES: usize = 1 << 20;

type Shared<S> = Arc<Mutex<Service<S>>>;

pub fn app<S: LogStore + Send + 'static>(service: Service<S>) -> Router {
    let shared: Shared<S> = Arc::new(Mutex::new(service));
    Router::new().fallback(move |request: Request| {
        let shared = shared.clone();
        async move { into_http(dispatch(&shared, request).await) }
    })
}

async fn dispatch<S: LogStore>(shared: &Shared<S>, request: Request) -> ApiResponse {
    let (parts, body) = request.into_parts();
    let Some(method) = Method::parse(parts.method.as_str()) else {
        return ApiError::new(405, "MethodNotAllowed", format!("{} is not supported", parts.method)).into_response();
    };
    let target = parts.uri.path_and_query().map_or(parts.uri.path(), |pq| pq.as_str());
    let (path, query) = split_query(target);
    let actor = parts.headers.get(ACTOR_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let body = match to_bytes(body, MAX_BODY_BYTES).await.map(|b| String::from_utf8(b.to_vec())) {
        Ok(Ok(text)) => text,
        _ => return ApiError::malformed("body is not UTF-8 text within the size limit").into_response(),
    };
    let request = ApiRequest { method, path, query, actor, body };
    let mut service = shared.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    service.handle(&request)
}

fn into_http(response: ApiResponse) -> Response {
    let mut out = Response::new(Body::from(response.body));
    *out.status_mut() = StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    out.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(response.content_type));
    out
}

/// Serves until the process is stopped.
pub fn serve<S: LogStore + Send + 'static>(service: Service<S>, addr: SocketAddr) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app(service)).await
    })
}
