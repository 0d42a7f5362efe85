//! Analytics engine for Twitter and YouTube datasets.
//!
//! Posts are ingested in batches. Each batch is merged into a cumulative
//! interaction graph, re-clustered with Louvain, mapped onto the previous
//! batch's community labels by member overlap, and laid out with a
//! warm-started ForceAtlas2. Filtered aggregations over the post corpus feed
//! the dashboard through the HTTP service.

pub mod analytics;
pub mod community;
pub mod config;
pub mod engine;
pub mod error;
pub mod graph;
pub mod layout;
pub mod model;
pub mod par;
pub mod store;
pub mod text;
pub mod topics;

pub use error::{Error, Result};
pub use model::{FilterSpec, Platform, Post, Sentiment, User};
pub use par::Execution;
