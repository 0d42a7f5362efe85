//! HTTP API over socnet datasets.
//!
//! All endpoints live under `/api/v1`. [`Api`] holds the request logic and
//! can be driven directly; [`http`] wraps it in an axum server.

pub mod api;
pub mod http;

pub use api::{filter_to_query, Api, BatchState, BatchStatus, Request, Response};
pub use http::{router, serve, serve_blocking};
