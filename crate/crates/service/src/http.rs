//! axum transport for [`Api`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::DefaultBodyLimit;
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::Response as HttpResponse;
use axum::Router;
use tokio::net::TcpListener;

use socnet_core::config::Config;

use crate::api::{Api, Request, VERSION_HEADER};

async fn dispatch(api: Arc<Api>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> HttpResponse {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    // ingestion and snapshot loads are CPU and disk bound
    let handled = tokio::task::spawn_blocking(move || {
        api.handle(&Request {
            method: method.as_str(),
            path: uri.path(),
            query: uri.query().unwrap_or(""),
            content_type: content_type.as_deref(),
            body: &body,
        })
    })
    .await;
    let (status, version, body) = match handled {
        Ok(r) => (r.status, r.version, r.body),
        Err(e) => {
            log::error!("request handler panicked: {e}");
            (500, None, b"{\"error\":{\"code\":\"internal\",\"message\":\"handler failed\"}}\n".to_vec())
        }
    };
    let mut resp = HttpResponse::new(Body::from(body));
    *resp.status_mut() = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    if let Some(v) = version.and_then(|v| HeaderValue::from_str(&v).ok()) {
        resp.headers_mut().insert(VERSION_HEADER, v);
    }
    resp
}

/// Router forwarding every request to `api`. Request bodies are unbounded
/// so whole ingestion files can be streamed in.
pub fn router(api: Arc<Api>) -> Router {
    Router::new()
        .fallback(move |method: Method, uri: Uri, headers: HeaderMap, body: Bytes| {
            dispatch(api.clone(), method, uri, headers, body)
        })
        .layer(DefaultBodyLimit::disable())
}

pub async fn serve(api: Arc<Api>, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(api))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Binds `config.bind` and serves until interrupted.
pub fn serve_blocking(config: Config) -> Result<(), String> {
    let bind = config.bind.clone();
    let api = Arc::new(Api::open(config).map_err(|e| e.to_string())?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| format!("cannot start runtime: {e}"))?;
    rt.block_on(async {
        let listener = TcpListener::bind(&bind)
            .await
            .map_err(|e| format!("cannot bind {bind}: {e}"))?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| e.to_string())?;
        log::info!("listening on http://{addr}/api/v1");
        serve(api, listener).await.map_err(|e| e.to_string())
    })
}
