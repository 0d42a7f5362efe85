//! Transport-independent request handling.
//!
//! [`Api::handle`] maps one HTTP-shaped request to a response. Every read is
//! answered from an immutable per-dataset snapshot, so a read that races an
//! ingestion sees the complete pre-batch state and reports that version.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use serde_json::{json, Value};

use socnet_core::analytics::{AggregationResult, Analytics, ContentKind, Field, Granularity, MatrixMode};
use socnet_core::config::{validate_threshold, Config};
use socnet_core::engine::{Engine, IngestReport, LabelKind, RunOptions, Stage};
use socnet_core::model::{format_timestamp, parse_timestamp, DateRange};
use socnet_core::store::DatasetState;
use socnet_core::topics::{nearest_to, Query};
use socnet_core::{Error, FilterSpec, Platform};

pub const PREFIX: &str = "/api/v1";
pub const VERSION_HEADER: &str = "x-dataset-version";

const MAX_PAGE: usize = 1_000;
const MAX_RANKED: usize = 1_000;

#[derive(Clone, Copy, Debug)]
pub struct Request<'a> {
    pub method: &'a str,
    pub path: &'a str,
    /// Raw query string without the leading `?`.
    pub query: &'a str,
    pub content_type: Option<&'a str>,
    pub body: &'a [u8],
}

impl<'a> Request<'a> {
    pub fn get(path: &'a str, query: &'a str) -> Self {
        Request {
            method: "GET",
            path,
            query,
            content_type: None,
            body: &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    /// Dataset version the body was computed against, when a dataset is involved.
    pub version: Option<String>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).expect("response bodies are JSON")
    }
}

#[derive(Debug)]
struct ApiError {
    status: u16,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn invalid_filter(message: impl Into<String>) -> Self {
        ApiError::new(422, "invalid_filter", message)
    }

    fn invalid_parameter(message: impl Into<String>) -> Self {
        ApiError::new(422, "invalid_parameter", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownDataset(_) => (404, "unknown_dataset"),
            Error::UnknownCommunity(_) => (404, "unknown_community"),
            Error::UnknownTopic(_) => (404, "unknown_topic"),
            Error::UnknownPost(_) => (404, "unknown_post"),
            Error::DatasetExists(_) => (409, "dataset_exists"),
            Error::DuplicateBatch { .. } => (409, "duplicate_batch"),
            Error::Locked(_) => (409, "locked"),
            Error::NoTopicModel => (409, "no_topic_model"),
            Error::NoPartition => (409, "no_partition"),
            Error::KindMismatch { .. } => (409, "edge_kind_mismatch"),
            Error::InvalidFilter(_) => (422, "invalid_filter"),
            Error::InvalidDatasetId(_) => (422, "invalid_dataset_id"),
            Error::PlatformMismatch { .. } => (422, "platform_mismatch"),
            Error::TooFewEmbeddings { .. } => (422, "too_few_embeddings"),
            Error::ZeroNormQuery | Error::MissingEmbedding(_) => (422, "invalid_query"),
            Error::DimensionMismatch { .. } => (422, "dimension_mismatch"),
            Error::InvalidArgument(_) | Error::Config(_) => (422, "invalid_parameter"),
            Error::Corrupt { .. } => (500, "corrupt_state"),
            Error::Io { .. } => (500, "io_error"),
            Error::Json(_) => (500, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

/// Progress of the most recent ingestion of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchState {
    #[default]
    Idle,
    Processing,
    Committing,
    Done,
    Failed,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BatchStatus {
    pub state: BatchState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<IngestReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Snapshot {
    version: String,
    state: DatasetState,
    analytics: Analytics,
}

impl Snapshot {
    fn new(state: DatasetState, engine: &Engine) -> Self {
        let analytics = Analytics::new(
            state.corpus.clone(),
            state.platform,
            state.partition.as_ref(),
            &state.registry,
            state.topics.as_ref(),
            engine.execution(),
        );
        Snapshot {
            version: state.version_tag(),
            state,
            analytics,
        }
    }
}

/// Query parameters; every parameter must be consumed by the handler.
struct Params {
    pairs: Vec<(String, String)>,
}

impl Params {
    fn parse(query: &str) -> Self {
        Params {
            pairs: form_urlencoded::parse(query.as_bytes()).into_owned().collect(),
        }
    }

    fn take_all(&mut self, name: &str) -> Vec<String> {
        let (hit, rest): (Vec<_>, Vec<_>) = self.pairs.drain(..).partition(|(k, _)| k == name);
        self.pairs = rest;
        hit.into_iter().map(|(_, v)| v).collect()
    }

    fn take(&mut self, name: &str) -> Result<Option<String>, ApiError> {
        let mut all = self.take_all(name);
        match all.len() {
            0 => Ok(None),
            1 => Ok(all.pop()),
            _ => Err(ApiError::invalid_parameter(format!("parameter `{name}` given more than once"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, name: &str) -> Result<Option<T>, ApiError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(name)?
            .map(|v| v.parse::<T>().map_err(|e| ApiError::invalid_parameter(format!("`{name}`: {e}"))))
            .transpose()
    }

    fn flag(&mut self, name: &str) -> Result<bool, ApiError> {
        match self.take(name)?.as_deref() {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") | Some("") => Ok(true),
            Some(v) => Err(ApiError::invalid_parameter(format!("`{name}`: expected true or false, got `{v}`"))),
        }
    }

    fn filter(&mut self) -> Result<FilterSpec, ApiError> {
        let mut keywords = self.take_all("keyword");
        for list in self.take_all("keywords") {
            keywords.extend(list.split(',').map(str::to_string));
        }
        let bound = |name: &str, v: Option<String>| {
            v.map(|s| parse_timestamp(&s).map_err(|e| ApiError::invalid_filter(format!("`{name}`: {e}"))))
                .transpose()
        };
        let start = bound("start", self.take("start")?)?;
        let end = bound("end", self.take("end")?)?;
        let date_range = match (start, end) {
            (Some(start), Some(end)) => Some(DateRange { start, end }),
            (None, None) => None,
            _ => return Err(ApiError::invalid_filter("`start` and `end` must be given together")),
        };
        let sentiment = self
            .take("sentiment")?
            .map(|s| s.parse().map_err(|e: String| ApiError::invalid_filter(e)))
            .transpose()?;
        let community = self
            .take("community")?
            .map(|s| s.parse::<u64>().map_err(|e| ApiError::invalid_filter(format!("`community`: {e}"))))
            .transpose()?;
        let topic = self
            .take("topic")?
            .map(|s| s.parse::<usize>().map_err(|e| ApiError::invalid_filter(format!("`topic`: {e}"))))
            .transpose()?;
        Ok(FilterSpec {
            keywords: (!keywords.is_empty()).then_some(keywords),
            date_range,
            language: self.take("language")?,
            sentiment,
            community,
            topic,
        })
    }

    fn finish(&mut self) -> Result<(), ApiError> {
        match self.pairs.first() {
            None => Ok(()),
            Some((k, _)) => Err(ApiError::invalid_parameter(format!("unknown parameter `{k}`"))),
        }
    }
}

/// Query string that [`Api`] parses back into exactly `filter`.
pub fn filter_to_query(filter: &FilterSpec) -> String {
    let mut q = form_urlencoded::Serializer::new(String::new());
    for k in filter.keywords.iter().flatten() {
        q.append_pair("keyword", k);
    }
    if let Some(r) = &filter.date_range {
        q.append_pair("start", &format_timestamp(&r.start));
        q.append_pair("end", &format_timestamp(&r.end));
    }
    if let Some(l) = &filter.language {
        q.append_pair("language", l);
    }
    if let Some(s) = filter.sentiment {
        q.append_pair("sentiment", s.as_str());
    }
    if let Some(c) = filter.community {
        q.append_pair("community", &c.to_string());
    }
    if let Some(t) = filter.topic {
        q.append_pair("topic", &t.to_string());
    }
    q.finish()
}

#[derive(Serialize)]
struct NetworkNode<'a> {
    id: &'a str,
    x: f64,
    y: f64,
    community: Option<u64>,
    degree: u64,
}

#[derive(Serialize)]
struct NetworkEdge<'a> {
    source: &'a str,
    target: &'a str,
    weight: u64,
}

pub struct Api {
    engine: Engine,
    snapshots: RwLock<HashMap<String, Arc<Snapshot>>>,
    status: Mutex<HashMap<String, BatchStatus>>,
}

type Handled = Result<(u16, Option<String>, Value), ApiError>;

fn ok(version: &str, mut body: Value) -> Handled {
    body["version"] = Value::String(version.to_string());
    Ok((200, Some(version.to_string()), body))
}

impl Api {
    pub fn new(engine: Engine) -> Self {
        Api {
            engine,
            snapshots: RwLock::new(HashMap::new()),
            status: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(config: Config) -> socnet_core::Result<Self> {
        Ok(Api::new(Engine::open(config)?))
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn handle(&self, req: &Request<'_>) -> Response {
        let path = req.path.trim_end_matches('/');
        let Some(rest) = path.strip_prefix(PREFIX) else {
            return self.error(None, ApiError::new(404, "not_found", format!("no route for {}", req.path)));
        };
        let segments: Vec<&str> = rest.split('/').filter(|s| !s.is_empty()).collect();
        let dataset = match segments.as_slice() {
            ["datasets", id, ..] => Some(*id),
            _ => None,
        };
        match self.route(req, &segments) {
            Ok((status, version, body)) => {
                let mut bytes = serde_json::to_vec(&body).expect("serializable");
                bytes.push(b'\n');
                Response { status, version, body: bytes }
            }
            Err(e) => self.error(dataset, e),
        }
    }

    fn error(&self, dataset: Option<&str>, e: ApiError) -> Response {
        let version = dataset
            .filter(|id| self.engine.store().exists(id))
            .and_then(|id| self.engine.store().version_tag(id).ok());
        let mut body = json!({"error": {"code": e.code, "message": e.message}});
        if let Some(v) = &version {
            body["version"] = Value::String(v.clone());
        }
        let mut bytes = serde_json::to_vec(&body).expect("serializable");
        bytes.push(b'\n');
        Response {
            status: e.status,
            version,
            body: bytes,
        }
    }

    fn route(&self, req: &Request<'_>, segments: &[&str]) -> Handled {
        let mut params = Params::parse(req.query);
        let m = req.method;
        let result = match segments {
            ["datasets"] if m == "GET" => self.list_datasets(),
            ["datasets"] if m == "POST" => self.create_dataset(req.body),
            ["datasets", id] if m == "GET" => self.dataset_summary(id),
            ["datasets", id, "batches"] if m == "GET" => self.list_batches(id),
            ["datasets", id, "batches"] if m == "POST" => self.ingest(id, req, &mut params),
            ["datasets", id, "batches", "status"] if m == "GET" => self.batch_status(id),
            ["datasets", id, "analytics", kind] if m == "GET" => self.analytics(id, kind, &mut params),
            ["datasets", id, "network"] if m == "GET" => self.network(id, &mut params),
            ["datasets", id, "communities"] if m == "GET" => self.communities(id),
            ["datasets", id, "topics", "map"] if m == "GET" => self.topic_map(id),
            ["datasets", id, "topics", "nearest"] if m == "GET" => self.nearest(id, &mut params),
            ["datasets", id, "labels", kind, label] if m == "PUT" => self.rename(id, kind, label, req.body),
            ["datasets", id, "posts"] if m == "GET" => self.posts(id, &mut params),
            ["datasets"]
            | ["datasets", _]
            | ["datasets", _, "batches" | "network" | "communities" | "posts"]
            | ["datasets", _, "batches", "status"]
            | ["datasets", _, "analytics", _]
            | ["datasets", _, "topics", "map" | "nearest"]
            | ["datasets", _, "labels", _, _] => {
                return Err(ApiError::new(405, "method_not_allowed", format!("{m} not allowed here")))
            }
            _ => return Err(ApiError::new(404, "not_found", format!("no route for {}", req.path))),
        }?;
        params.finish()?;
        Ok(result)
    }

    /// Current snapshot of `id`, reloaded when the committed version moved.
    fn snapshot(&self, id: &str) -> Result<Arc<Snapshot>, ApiError> {
        let store = self.engine.store();
        store.meta(id)?;
        let generation = store.current_generation(id)?;
        let names = store.names(id)?;
        let tag = format!("g{generation}-r{}", names.revision);
        let cached = self.snapshots.read().expect("snapshot lock").get(id).cloned();
        if let Some(s) = &cached {
            if s.version == tag {
                return Ok(s.clone());
            }
        }
        let state = match cached {
            // only label names changed: reuse the loaded state
            Some(s) if s.state.generation == generation => {
                let mut state = s.state.clone();
                state.names = names;
                state.apply_names();
                state
            }
            _ => self.engine.load(id)?,
        };
        let snap = Arc::new(Snapshot::new(state, &self.engine));
        self.snapshots
            .write()
            .expect("snapshot lock")
            .insert(id.to_string(), snap.clone());
        Ok(snap)
    }

    fn list_datasets(&self) -> Handled {
        let store = self.engine.store();
        let mut out = Vec::new();
        for id in store.list()? {
            let meta = store.meta(&id)?;
            out.push(json!({
                "id": meta.id,
                "platform": meta.platform,
                "created_at": format_timestamp(&meta.created_at),
                "version": store.version_tag(&id)?,
            }));
        }
        Ok((200, None, json!({ "datasets": out })))
    }

    fn create_dataset(&self, body: &[u8]) -> Handled {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Create {
            id: String,
            platform: String,
        }
        let c: Create = serde_json::from_slice(body)
            .map_err(|e| ApiError::invalid_parameter(format!("expected {{\"id\", \"platform\"}}: {e}")))?;
        let platform: Platform = c.platform.parse().map_err(ApiError::invalid_parameter)?;
        let meta = self.engine.create(&c.id, platform)?;
        let version = self.engine.store().version_tag(&c.id)?;
        Ok((
            201,
            Some(version.clone()),
            json!({
                "id": meta.id,
                "platform": meta.platform,
                "created_at": format_timestamp(&meta.created_at),
                "version": version,
            }),
        ))
    }

    fn dataset_summary(&self, id: &str) -> Handled {
        let s = self.snapshot(id)?;
        let st = &s.state;
        ok(
            &s.version,
            json!({
                "id": st.id,
                "platform": st.platform,
                "generation": st.generation,
                "batches": st.batches.len(),
                "posts": st.corpus.len(),
                "users": st.users.len(),
                "nodes": st.graph.node_count(),
                "edges": st.graph.edge_count(),
                "communities": st.partition.as_ref().map_or(0, |p| p.community_count()),
                "modularity": st.partition.as_ref().map(|p| p.modularity),
                "topics": st.topics.as_ref().map(|t| t.k),
                "embedding_dim": st.embedding_dim,
            }),
        )
    }

    fn list_batches(&self, id: &str) -> Handled {
        let s = self.snapshot(id)?;
        ok(&s.version, json!({ "batches": s.state.batches }))
    }

    fn set_status(&self, id: &str, status: BatchStatus) {
        self.status.lock().expect("status lock").insert(id.to_string(), status);
    }

    fn batch_status(&self, id: &str) -> Handled {
        self.engine.store().meta(id)?;
        let status = self.status.lock().expect("status lock").get(id).cloned().unwrap_or_default();
        let version = self.engine.store().version_tag(id)?;
        ok(&version, serde_json::to_value(status).expect("serializable"))
    }

    fn ingest(&self, id: &str, req: &Request<'_>, params: &mut Params) -> Handled {
        self.engine.store().meta(id)?;
        let opts = RunOptions {
            seed: params.parsed("seed")?,
            threshold: params.parsed("threshold")?,
            iterations: params.parsed("iterations")?,
            k_topics: params.parsed("k_topics")?,
        };
        if let Some(t) = opts.threshold {
            validate_threshold(t)?;
        }
        let mut path = params.take("path")?;
        let is_json = req
            .content_type
            .is_some_and(|c| c.split(';').next().is_some_and(|m| m.trim() == "application/json"));
        if is_json {
            #[derive(serde::Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Reference {
                path: String,
            }
            let r: Reference = serde_json::from_slice(req.body)
                .map_err(|e| ApiError::invalid_parameter(format!("expected {{\"path\": ...}}: {e}")))?;
            if path.is_some() {
                return Err(ApiError::invalid_parameter("file path given twice"));
            }
            path = Some(r.path);
        }
        params.finish()?;
        let (raw, source) = match path {
            Some(p) => {
                let raw = std::fs::read(&p)
                    .map_err(|e| ApiError::new(422, "unreadable_input", format!("cannot read {p}: {e}")))?;
                (raw, p)
            }
            None if req.body.is_empty() => {
                return Err(ApiError::invalid_parameter("empty body: send records or a file reference"))
            }
            None => (req.body.to_vec(), "upload".to_string()),
        };
        let progress = |stage: Stage| {
            let state = match stage {
                Stage::Processing => BatchState::Processing,
                Stage::Committing => BatchState::Committing,
            };
            self.set_status(
                id,
                BatchStatus {
                    state,
                    source: Some(source.clone()),
                    ..Default::default()
                },
            );
        };
        match self.engine.ingest(id, &raw, &source, &opts, &progress) {
            Ok(report) => {
                log::info!("{id}: batch {} committed as {}", report.batch_id, report.version);
                self.set_status(
                    id,
                    BatchStatus {
                        state: BatchState::Done,
                        source: Some(source.clone()),
                        report: Some(report.clone()),
                        error: None,
                    },
                );
                let version = report.version.clone();
                let mut body = serde_json::to_value(&report).expect("serializable");
                body["version"] = Value::String(version.clone());
                Ok((201, Some(version), body))
            }
            Err(e) => {
                // a rejected duplicate or lock conflict leaves the running job's status alone
                if !matches!(e, Error::Locked(_) | Error::DuplicateBatch { .. }) {
                    self.set_status(
                        id,
                        BatchStatus {
                            state: BatchState::Failed,
                            source: Some(source.clone()),
                            report: None,
                            error: Some(e.to_string()),
                        },
                    );
                }
                Err(e.into())
            }
        }
    }

    fn analytics(&self, id: &str, kind: &str, params: &mut Params) -> Handled {
        let s = self.snapshot(id)?;
        let filter = params.filter()?;
        let a = &s.analytics;
        let result: AggregationResult = match kind {
            "timeline" => {
                let g: Granularity = params.parsed("granularity")?.unwrap_or(Granularity::Day);
                let split = params.flag("split_sentiment")?;
                a.timeline(&filter, g, split)?
            }
            "distribution" => {
                let field: Field = params
                    .parsed("field")?
                    .ok_or_else(|| ApiError::invalid_parameter("`field` is required"))?;
                a.distribution(&filter, field)?
            }
            "geo" => a.geo_distribution(&filter)?,
            "top" => {
                let kind: ContentKind = params
                    .parsed("kind")?
                    .ok_or_else(|| ApiError::invalid_parameter("`kind` is required"))?;
                a.top_content(&filter, kind, ranked_limit(params, 10)?)?
            }
            "wordcloud" => a.wordcloud_terms(&filter, ranked_limit(params, 100)?)?,
            "topics-per-community" => {
                let mode: MatrixMode = params.parsed("mode")?.unwrap_or(MatrixMode::Counts);
                a.topics_per_community(&filter, mode)?
            }
            other => return Err(ApiError::new(404, "not_found", format!("unknown aggregation `{other}`"))),
        };
        ok(&s.version, json!({ "filter": filter, "result": result }))
    }

    fn network(&self, id: &str, params: &mut Params) -> Handled {
        let s = self.snapshot(id)?;
        let cap = self.engine.config().network.edge_limit;
        let want_edges = params.flag("edges")?;
        let limit: usize = params.parsed("edge_limit")?.unwrap_or(cap).min(cap);
        let st = &s.state;
        let g = &st.graph;
        let nodes: Vec<NetworkNode> = match &st.layout {
            Some(layout) => layout
                .ids
                .iter()
                .zip(&layout.positions)
                .map(|(uid, p)| NetworkNode {
                    id: uid,
                    x: p[0],
                    y: p[1],
                    community: st.partition.as_ref().and_then(|part| part.label_of(uid)),
                    degree: g.node_index(uid).map_or(0, |i| g.degree(i)),
                })
                .collect(),
            None => Vec::new(),
        };
        let mut body = json!({
            "node_count": g.node_count(),
            "edge_count": g.edge_count(),
            "nodes": nodes,
        });
        if want_edges {
            let mut edges: Vec<(usize, usize, u64)> = g.edges().collect();
            edges.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| (g.id(a.0), g.id(a.1)).cmp(&(g.id(b.0), g.id(b.1)))));
            let truncated = edges.len() > limit;
            edges.truncate(limit);
            let edges: Vec<NetworkEdge> = edges
                .iter()
                .map(|&(a, b, w)| NetworkEdge {
                    source: g.id(a),
                    target: g.id(b),
                    weight: w,
                })
                .collect();
            body["edges"] = serde_json::to_value(edges).expect("serializable");
            body["edges_truncated"] = Value::Bool(truncated);
            body["edge_limit"] = json!(limit);
        }
        ok(&s.version, body)
    }

    fn communities(&self, id: &str) -> Handled {
        let s = self.snapshot(id)?;
        let st = &s.state;
        let mut rows = Vec::new();
        if let Some(p) = &st.partition {
            let sizes = p.sizes();
            let mut by_label: Vec<(u64, usize)> = (0..p.community_count()).map(|c| (p.label(c), sizes[c])).collect();
            by_label.sort();
            for (label, size) in by_label {
                let created = st.registry.get(label).map(|l| l.created_in_batch);
                rows.push(json!({
                    "label_id": label,
                    "name": st.registry.name(label),
                    "size": size,
                    "created_in_batch": created,
                }));
            }
        }
        ok(
            &s.version,
            json!({
                "modularity": st.partition.as_ref().map(|p| p.modularity),
                "communities": rows,
            }),
        )
    }

    fn topic_map(&self, id: &str) -> Handled {
        let s = self.snapshot(id)?;
        let model = s.state.topics.as_ref().ok_or(Error::NoTopicModel)?;
        let mut sizes = vec![0usize; model.k];
        for &t in &model.assignment {
            sizes[t] += 1;
        }
        let topics: Vec<Value> = (0..model.k)
            .map(|t| json!({"topic": t, "label": model.label(t), "size": sizes[t]}))
            .collect();
        let points: Vec<Value> = model
            .post_ids
            .iter()
            .zip(&model.projection)
            .zip(&model.assignment)
            .map(|((pid, xy), &t)| json!({"post_id": pid, "x": xy[0], "y": xy[1], "topic": t, "label": model.label(t)}))
            .collect();
        ok(
            &s.version,
            json!({
                "k": model.k,
                "topics": topics,
                "previous_topic_names": s.state.names.previous_topic_names,
                "points": points,
            }),
        )
    }

    fn nearest(&self, id: &str, params: &mut Params) -> Handled {
        let s = self.snapshot(id)?;
        let post = params
            .take("post")?
            .ok_or_else(|| ApiError::invalid_parameter("`post` is required"))?;
        let k = ranked_limit(params, 10)?;
        let hits = nearest_to(s.state.corpus.posts(), Query::Post(&post), k, self.engine.execution())?;
        let items: Vec<Value> = hits
            .into_iter()
            .map(|(pid, sim)| json!({"post_id": pid, "similarity": sim}))
            .collect();
        ok(&s.version, json!({ "post": post, "items": items }))
    }

    fn rename(&self, id: &str, kind: &str, label: &str, body: &[u8]) -> Handled {
        self.engine.store().meta(id)?;
        let kind: LabelKind = kind
            .parse()
            .map_err(|e: String| ApiError::new(404, "not_found", e))?;
        let label: u64 = label
            .parse()
            .map_err(|_| ApiError::new(404, "not_found", format!("label id `{label}` is not a number")))?;
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Rename {
            name: String,
        }
        let r: Rename = serde_json::from_slice(body)
            .map_err(|e| ApiError::invalid_parameter(format!("expected {{\"name\": ...}}: {e}")))?;
        let name = r.name.trim();
        if name.is_empty() {
            return Err(ApiError::invalid_parameter("name must not be empty"));
        }
        let version = self.engine.rename(id, kind, label, name)?;
        ok(
            &version,
            json!({ "kind": kind, "label_id": label, "name": name }),
        )
    }

    fn posts(&self, id: &str, params: &mut Params) -> Handled {
        let s = self.snapshot(id)?;
        let filter = params.filter()?;
        let offset: usize = params.parsed("offset")?.unwrap_or(0);
        let limit: usize = params.parsed("limit")?.unwrap_or(50);
        if limit > MAX_PAGE {
            return Err(ApiError::invalid_parameter(format!("`limit` must be at most {MAX_PAGE}")));
        }
        let (total, page) = s.analytics.posts(&filter, offset, limit)?;
        let mut authors = BTreeMap::new();
        for p in &page {
            if let Some(u) = s.state.users.get(&p.author_id) {
                let community = s.state.partition.as_ref().and_then(|part| part.label_of(&u.id));
                authors.insert(u.id.as_str(), json!({"user": u, "community": community}));
            }
        }
        ok(
            &s.version,
            json!({
                "filter": filter,
                "total": total,
                "offset": offset,
                "limit": limit,
                "posts": page,
                "authors": authors,
            }),
        )
    }
}

fn ranked_limit(params: &mut Params, default: usize) -> Result<usize, ApiError> {
    let k: usize = params.parsed("k")?.unwrap_or(default);
    if k == 0 || k > MAX_RANKED {
        return Err(ApiError::invalid_parameter(format!("`k` must be in 1..={MAX_RANKED}")));
    }
    Ok(k)
}
