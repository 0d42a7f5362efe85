//! The batch pipeline and the operations built on it.
//!
//! The `apply_*` functions are pure state transitions driven entirely by their
//! inputs and recorded seeds; [`Engine`] wraps them with locking, duplicate
//! detection and commits, and the audit replays the journal through the very
//! same functions.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::community::{cluster, match_communities, LabelId};
use crate::config::{validate_threshold, Config};
use crate::error::{Error, Result};
use crate::graph::{build_edges, InteractionContext, SkipTally};
use crate::layout::{compute_layout, export_table, LayoutParams};
use crate::model::{parse_batch, Batch, Platform, Post, Reject};
use crate::par::Execution;
use crate::store::{
    digest, BatchFiles, DatasetMeta, DatasetState, JournalEntry, NamesOverlay, Operation, Store, TopicRun,
};
use crate::topics::TopicModel;

/// What one batch did to the state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub line_count: u64,
    pub accepted: u64,
    pub rejects: Vec<Reject>,
    pub interactions: u64,
    pub edge_weight_added: u64,
    pub skipped: SkipTally,
    pub users: usize,
    pub communities: usize,
    pub modularity: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchParams {
    pub batch: Batch,
    pub louvain_seed: u64,
    pub layout_seed: u64,
    pub threshold: f64,
    pub layout: LayoutParams,
    pub topics: Option<TopicRun>,
}

fn check_embedding(dim: &mut Option<usize>, post: &Post) -> std::result::Result<(), String> {
    let Some(e) = &post.embedding else { return Ok(()) };
    match *dim {
        Some(d) if d != e.len() => Err(format!("embedding dimension {} does not match dataset dimension {d}", e.len())),
        Some(_) => Ok(()),
        None => {
            *dim = Some(e.len());
            Ok(())
        }
    }
}

fn recluster_partition(state: &mut DatasetState, seed: u64, threshold: f64, batch_id: u64) {
    if state.graph.node_count() == 0 {
        return;
    }
    let (comm, q) = cluster(&state.graph, seed);
    let partition = match_communities(
        state.partition.as_ref(),
        state.graph.ids().to_vec(),
        comm,
        q,
        threshold,
        &mut state.registry,
        batch_id,
    );
    state.partition = Some(partition);
}

fn refit_topics(state: &mut DatasetState, run: TopicRun, exec: Execution) -> Result<()> {
    state.topics = Some(TopicModel::fit(state.corpus.posts(), run.k, run.seed, exec)?);
    state.topics_fitted_at = Some(state.generation);
    Ok(())
}

/// Parse → graph merge → Louvain → label matching → warm-start layout → topic
/// assignment. Returns the next-generation state and the accepted posts.
pub fn apply_batch(
    state: &DatasetState,
    raw: &[u8],
    params: &BatchParams,
    exec: Execution,
) -> Result<(DatasetState, Vec<Post>, BatchOutcome)> {
    validate_threshold(params.threshold)?;
    params.layout.validate().map_err(Error::InvalidArgument)?;
    let parsed = parse_batch(raw).map_err(|e| Error::io(&params.batch.source_path, e))?;
    let mut outcome = BatchOutcome {
        line_count: parsed.line_count,
        rejects: parsed.rejects,
        ..Default::default()
    };

    let mut next = state.clone();
    next.generation += 1;
    let mut seen: HashSet<&str> = HashSet::new();
    let mut accepted = Vec::new();
    let mut authors = Vec::new();
    for ((post, author), &line) in parsed.posts.iter().zip(&parsed.authors).zip(&parsed.post_lines) {
        let problem = if post.platform != state.platform {
            Some(format!("platform {} does not match dataset platform {}", post.platform, state.platform))
        } else if state.corpus.contains(&post.id) || !seen.insert(post.id.as_str()) {
            Some(format!("duplicate post id `{}`", post.id))
        } else {
            check_embedding(&mut next.embedding_dim, post).err()
        };
        match problem {
            Some(reason) => outcome.rejects.push(Reject { line, reason }),
            None => {
                accepted.push(post.clone());
                authors.push(author.clone());
            }
        }
    }
    outcome.rejects.sort_by_key(|r| r.line);
    outcome.accepted = accepted.len() as u64;

    for (post, author) in accepted.iter().zip(authors) {
        match author {
            Some(u) => next.users.upsert(u),
            None => next.users.ensure(&post.author_id, state.platform),
        }
        if let Some(channel) = &post.channel_id {
            next.users.ensure(channel, state.platform);
        }
    }

    let old_len = state.corpus.len();
    {
        let corpus = Arc::make_mut(&mut next.corpus);
        for p in &accepted {
            corpus.push(p.clone());
        }
    }
    let edges = {
        let ctx = InteractionContext::new(next.corpus.posts());
        build_edges(state.platform, &next.corpus.posts()[old_len..], &ctx, &next.users)
    };
    outcome.interactions = edges.interactions;
    outcome.edge_weight_added = edges.total_weight();
    outcome.skipped = edges.skipped;
    next.graph.merge_batch(&edges)?;

    recluster_partition(&mut next, params.louvain_seed, params.threshold, params.batch.batch_id);
    if next.graph.node_count() > 0 {
        next.layout = Some(compute_layout(&next.graph, state.layout.as_ref(), params.layout_seed, params.layout.clone()));
    }

    match params.topics {
        Some(run) => refit_topics(&mut next, run, exec)?,
        None => {
            if let Some(model) = &mut next.topics {
                model.assign_new(&accepted);
            }
        }
    }

    let mut batch = params.batch.clone();
    batch.post_count = outcome.accepted;
    next.batches.push(batch);
    outcome.users = next.users.len();
    outcome.communities = next.partition.as_ref().map_or(0, |p| p.community_count());
    outcome.modularity = next.partition.as_ref().map(|p| p.modularity);
    Ok((next, accepted, outcome))
}

/// Re-runs Louvain with a new seed and re-matches labels; optionally refits topics.
pub fn apply_recluster(
    state: &DatasetState,
    louvain_seed: u64,
    threshold: f64,
    topics: Option<TopicRun>,
    exec: Execution,
) -> Result<DatasetState> {
    validate_threshold(threshold)?;
    let mut next = state.clone();
    next.generation += 1;
    let batch_id = state.batches.last().map_or(0, |b| b.batch_id);
    recluster_partition(&mut next, louvain_seed, threshold, batch_id);
    if let Some(run) = topics {
        refit_topics(&mut next, run, exec)?;
    }
    Ok(next)
}

/// Continues the layout from the current positions.
pub fn apply_relayout(state: &DatasetState, layout_seed: u64, params: &LayoutParams) -> Result<DatasetState> {
    params.validate().map_err(Error::InvalidArgument)?;
    let mut next = state.clone();
    next.generation += 1;
    if next.graph.node_count() > 0 {
        next.layout = Some(compute_layout(&next.graph, state.layout.as_ref(), layout_seed, params.clone()));
    }
    Ok(next)
}

/// Per-call overrides; anything unset comes from the configuration or a fresh
/// random seed (which is then recorded in the journal).
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub iterations: Option<u32>,
    pub k_topics: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub batch_id: u64,
    pub generation: u64,
    pub version: String,
    pub digest: String,
    #[serde(flatten)]
    pub outcome: BatchOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Community,
    Topic,
}

impl std::str::FromStr for LabelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "community" => Ok(LabelKind::Community),
            "topic" => Ok(LabelKind::Topic),
            other => Err(format!("unknown label kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub generations: u64,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Ingestion stages reported to progress observers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Processing,
    Committing,
}

pub struct Engine {
    store: Store,
    config: Config,
    exec: Execution,
}

fn draw_seed() -> u64 {
    rand::random()
}

impl Engine {
    pub fn new(store: Store, config: Config) -> Self {
        Engine {
            store,
            config,
            exec: Execution::default(),
        }
    }

    pub fn open(config: Config) -> Result<Self> {
        let store = Store::open(&config.data_root)?;
        Ok(Engine::new(store, config))
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn create(&self, id: &str, platform: Platform) -> Result<DatasetMeta> {
        self.store.create(id, platform)
    }

    pub fn load(&self, id: &str) -> Result<DatasetState> {
        self.store.meta(id)?;
        self.store.load(id)
    }

    fn layout_params(&self, opts: &RunOptions) -> LayoutParams {
        let mut p = self.config.layout.clone();
        if let Some(i) = opts.iterations {
            p.iterations = i;
        }
        p
    }

    pub fn ingest_file(&self, id: &str, path: &Path, opts: &RunOptions) -> Result<IngestReport> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.ingest(id, &raw, &path.display().to_string(), opts, &|_| {})
    }

    /// Runs the full batch pipeline and commits the result atomically.
    pub fn ingest(
        &self,
        id: &str,
        raw: &[u8],
        source_path: &str,
        opts: &RunOptions,
        progress: &dyn Fn(Stage),
    ) -> Result<IngestReport> {
        let lock = self.store.lock(id)?;
        let content_digest = digest(raw);
        if let Some(batch_id) = self.store.find_digest(id, &content_digest)? {
            return Err(Error::DuplicateBatch {
                digest: content_digest,
                batch_id,
            });
        }
        progress(Stage::Processing);
        let state = self.store.load(id)?;
        let batch_id = state.batches.last().map_or(1, |b| b.batch_id + 1);
        let params = BatchParams {
            batch: Batch {
                batch_id,
                source_path: source_path.to_string(),
                post_count: 0,
                ingested_at: DateTime::from_timestamp(Utc::now().timestamp(), 0).expect("now"),
            },
            louvain_seed: opts.seed.unwrap_or_else(draw_seed),
            layout_seed: opts.seed.map_or_else(draw_seed, |s| s.wrapping_add(1)),
            threshold: opts.threshold.unwrap_or(self.config.community.threshold),
            layout: self.layout_params(opts),
            topics: opts.k_topics.map(|k| TopicRun {
                k,
                seed: opts.seed.map_or_else(draw_seed, |s| s.wrapping_add(2)),
            }),
        };
        let (mut next, accepted, outcome) = apply_batch(&state, raw, &params, self.exec)?;
        let mut batch = params.batch.clone();
        batch.post_count = outcome.accepted;
        let entry = JournalEntry {
            generation: next.generation,
            op: Operation::Batch {
                batch,
                digest: content_digest.clone(),
                line_count: outcome.line_count,
                rejected: outcome.rejects.len() as u64,
                louvain_seed: params.louvain_seed,
                layout_seed: params.layout_seed,
                threshold: params.threshold,
                layout: params.layout.clone(),
                topics: params.topics,
            },
        };
        progress(Stage::Committing);
        self.store.commit(
            &lock,
            &next,
            &entry,
            Some(BatchFiles {
                batch_id,
                raw,
                accepted: &accepted,
            }),
        )?;
        self.after_topic_refit(&lock, &mut next)?;
        Ok(IngestReport {
            batch_id,
            generation: next.generation,
            version: next.version_tag(),
            digest: content_digest,
            outcome,
        })
    }

    /// A refitted topic model starts with default names; the old names are
    /// kept for manual reassignment.
    fn after_topic_refit(&self, lock: &crate::store::WriteLock, next: &mut DatasetState) -> Result<()> {
        if next.topics_fitted_at == Some(next.generation) {
            let mut names = next.names.clone();
            if let Some(old) = names.topic_generation {
                if old != next.generation && !names.topics.is_empty() {
                    names.previous_topic_names = names.topics.values().cloned().collect();
                }
            }
            names.topics.clear();
            names.topic_generation = Some(next.generation);
            names.revision += 1;
            self.store.write_names(lock, &names)?;
            next.names = names;
        }
        Ok(())
    }

    pub fn recluster(&self, id: &str, opts: &RunOptions) -> Result<DatasetState> {
        let lock = self.store.lock(id)?;
        let state = self.store.load(id)?;
        let seed = opts.seed.unwrap_or_else(draw_seed);
        let threshold = opts.threshold.unwrap_or(self.config.community.threshold);
        let topics = opts.k_topics.map(|k| TopicRun {
            k,
            seed: opts.seed.map_or_else(draw_seed, |s| s.wrapping_add(2)),
        });
        let mut next = apply_recluster(&state, seed, threshold, topics, self.exec)?;
        let entry = JournalEntry {
            generation: next.generation,
            op: Operation::Recluster {
                louvain_seed: seed,
                threshold,
                topics,
            },
        };
        self.store.commit(&lock, &next, &entry, None)?;
        self.after_topic_refit(&lock, &mut next)?;
        next.apply_names();
        Ok(next)
    }

    pub fn relayout(&self, id: &str, opts: &RunOptions) -> Result<DatasetState> {
        let lock = self.store.lock(id)?;
        let state = self.store.load(id)?;
        let seed = opts.seed.unwrap_or_else(draw_seed);
        let params = self.layout_params(opts);
        let next = apply_relayout(&state, seed, &params)?;
        let entry = JournalEntry {
            generation: next.generation,
            op: Operation::Relayout {
                layout_seed: seed,
                layout: params,
            },
        };
        self.store.commit(&lock, &next, &entry, None)?;
        Ok(next)
    }

    /// Renames a community label or topic. Returns the new version tag.
    pub fn rename(&self, id: &str, kind: LabelKind, label: u64, name: &str) -> Result<String> {
        let name = name.trim();
        if name.is_empty() || name.len() > 200 || name.contains(['\n', '\r', '\t']) {
            return Err(Error::InvalidArgument("label names must be 1-200 characters on one line".into()));
        }
        let lock = self.store.lock(id)?;
        let state = self.store.load(id)?;
        let mut names: NamesOverlay = state.names.clone();
        match kind {
            LabelKind::Community => {
                if state.registry.get(label as LabelId).is_none() {
                    return Err(Error::UnknownCommunity(label));
                }
                names.communities.insert(label, name.to_string());
            }
            LabelKind::Topic => {
                let model = state.topics.as_ref().ok_or(Error::NoTopicModel)?;
                let t = label as usize;
                if t >= model.k {
                    return Err(Error::UnknownTopic(t));
                }
                names.topics.insert(t, name.to_string());
                names.topic_generation = state.topics_fitted_at;
            }
        }
        names.revision += 1;
        self.store.write_names(&lock, &names)?;
        Ok(format!("g{}-r{}", state.generation, names.revision))
    }

    /// Replays the journal from an empty state with the recorded seeds and
    /// compares every generation's artifacts with the stored snapshot.
    pub fn audit(&self, id: &str) -> Result<AuditReport> {
        let meta = self.store.meta(id)?;
        let journal = self.store.journal(id)?;
        let mut state = DatasetState::empty(id, meta.platform);
        let mut report = AuditReport::default();
        for entry in &journal {
            let (next, accepted) = match &entry.op {
                Operation::Batch {
                    batch,
                    digest: recorded,
                    louvain_seed,
                    layout_seed,
                    threshold,
                    layout,
                    topics,
                    ..
                } => {
                    let raw = self.store.raw_batch(id, batch.batch_id)?;
                    if digest(&raw) != *recorded {
                        report
                            .mismatches
                            .push(format!("generation {}: raw batch {} digest changed", entry.generation, batch.batch_id));
                    }
                    let params = BatchParams {
                        batch: batch.clone(),
                        louvain_seed: *louvain_seed,
                        layout_seed: *layout_seed,
                        threshold: *threshold,
                        layout: layout.clone(),
                        topics: *topics,
                    };
                    let (next, accepted, _) = apply_batch(&state, &raw, &params, self.exec)?;
                    (next, Some((batch.batch_id, accepted)))
                }
                Operation::Recluster {
                    louvain_seed,
                    threshold,
                    topics,
                } => (apply_recluster(&state, *louvain_seed, *threshold, *topics, self.exec)?, None),
                Operation::Relayout { layout_seed, layout } => (apply_relayout(&state, *layout_seed, layout)?, None),
            };
            let g = entry.generation;
            if next.generation != g {
                report.mismatches.push(format!("generation {g}: replay produced generation {}", next.generation));
            }
            for (name, body) in next.artifacts() {
                match self.store.snapshot_file(id, g, name)? {
                    Some(stored) if stored == body => {}
                    Some(_) => report.mismatches.push(format!("generation {g}: {name} differs")),
                    None => report.mismatches.push(format!("generation {g}: {name} missing from snapshot")),
                }
            }
            let stored_manifest = self.store.manifest(id, g)?;
            let expected: Vec<&str> = stored_manifest.files.keys().map(String::as_str).collect();
            let produced: Vec<&str> = next.artifacts().keys().copied().collect();
            if expected != produced {
                report.mismatches.push(format!("generation {g}: artifact set {produced:?} vs stored {expected:?}"));
            }
            if let Some((batch_id, accepted)) = accepted {
                let mut text = String::new();
                for p in &accepted {
                    text.push_str(&p.to_record());
                    text.push('\n');
                }
                if self.store.accepted_posts_text(id, batch_id)? != text {
                    report.mismatches.push(format!("generation {g}: accepted posts of batch {batch_id} differ"));
                }
            }
            state = next;
            report.generations += 1;
        }
        Ok(report)
    }

    /// Writes the current snapshot as plain tables for external tools.
    pub fn export(&self, id: &str, dir: &Path) -> Result<Vec<String>> {
        let state = self.load(id)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(&str, String)> = vec![
            ("graph.edges", state.graph.edge_table()),
            ("graph.nodes", state.graph.node_table()),
        ];
        if let Some(p) = &state.partition {
            files.push(("partition.tsv", p.table()));
            let mut labels = String::new();
            for l in state.registry.iter() {
                let _ = writeln!(labels, "{}\t{}\t{}", l.label_id, l.created_in_batch, l.name);
            }
            files.push(("labels.tsv", labels));
        }
        if let Some(l) = &state.layout {
            let label_of = |u: &str| state.partition.as_ref().and_then(|p| p.label_of(u));
            files.push(("layout.tsv", export_table(l, &state.graph, label_of)));
        }
        if let Some(t) = &state.topics {
            files.push(("topics.tsv", t.map_table()));
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path.display().to_string());
        }
        Ok(written)
    }
}
