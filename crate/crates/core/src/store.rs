//! Durable dataset state: an append-only journal, raw and accepted batch
//! files, and one self-describing snapshot directory per generation.
//!
//! ```text
//! <root>/<dataset>/
//!   dataset.json            format version, id, platform
//!   journal.jsonl           one entry per committed generation
//!   CURRENT                 last committed generation
//!   names.json              label-name overlay (community and topic names)
//!   LOCK                    present while a writer holds the dataset
//!   batches/000001.raw      ingested bytes, as received
//!   batches/000001.posts    accepted posts, one canonical record per line
//!   snapshots/000001/       MANIFEST.json plus the state tables
//! ```
//!
//! A commit writes batch files and the snapshot directory first, appends the
//! journal entry, then atomically replaces `CURRENT`. Readers only trust
//! journal entries up to `CURRENT`, so a crash at any point leaves the
//! previous generation intact.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::Corpus;
use crate::community::{CommunityLabel, LabelId, LabelRegistry, Partition};
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, InteractionGraph};
use crate::layout::{LayoutParams, LayoutState};
use crate::model::{parse_record, timestamp_serde, Batch, Platform, Post, User, UserRegistry};
use crate::topics::TopicModel;

pub const FORMAT_VERSION: u32 = 1;

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub id: String,
    pub platform: Platform,
    #[serde(with = "timestamp_serde")]
    pub created_at: DateTime<Utc>,
}

/// Seeded topic clustering run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRun {
    pub k: usize,
    pub seed: u64,
}

/// The state transition a journal entry records, with every seed used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operation {
    Batch {
        batch: Batch,
        digest: String,
        line_count: u64,
        rejected: u64,
        louvain_seed: u64,
        layout_seed: u64,
        threshold: f64,
        layout: LayoutParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        topics: Option<TopicRun>,
    },
    Recluster {
        louvain_seed: u64,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        topics: Option<TopicRun>,
    },
    Relayout {
        layout_seed: u64,
        layout: LayoutParams,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    /// Generation this entry produced; equals its 1-based journal position.
    pub generation: u64,
    #[serde(flatten)]
    pub op: Operation,
}

/// User-assigned names layered over the snapshots. Renames are not state
/// transitions, so they live outside the journal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NamesOverlay {
    pub revision: u64,
    pub communities: BTreeMap<LabelId, String>,
    /// Topic names for the model fitted at `topic_generation`.
    pub topics: BTreeMap<usize, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_generation: Option<u64>,
    /// Names of the previous topic model, kept for manual reassignment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub previous_topic_names: Vec<String>,
}

/// Complete in-memory state of one dataset at one generation.
#[derive(Clone, Debug)]
pub struct DatasetState {
    pub id: String,
    pub platform: Platform,
    pub generation: u64,
    pub batches: Vec<Batch>,
    pub corpus: Arc<Corpus>,
    pub users: UserRegistry,
    pub graph: InteractionGraph,
    pub partition: Option<Partition>,
    pub registry: LabelRegistry,
    pub layout: Option<LayoutState>,
    pub topics: Option<TopicModel>,
    /// Generation whose operation last refitted the topic model.
    pub topics_fitted_at: Option<u64>,
    pub embedding_dim: Option<usize>,
    pub names: NamesOverlay,
}

impl DatasetState {
    pub fn empty(id: &str, platform: Platform) -> Self {
        DatasetState {
            id: id.to_string(),
            platform,
            generation: 0,
            batches: Vec::new(),
            corpus: Arc::new(Corpus::new()),
            users: UserRegistry::new(),
            graph: InteractionGraph::new(),
            partition: None,
            registry: LabelRegistry::new(),
            layout: None,
            topics: None,
            topics_fitted_at: None,
            embedding_dim: None,
            names: NamesOverlay::default(),
        }
    }

    /// `g<generation>-r<name revision>`; changes whenever any response could.
    pub fn version_tag(&self) -> String {
        format!("g{}-r{}", self.generation, self.names.revision)
    }

    /// Applies the name overlay to the label registry and topic model.
    pub fn apply_names(&mut self) {
        for (&id, name) in &self.names.communities {
            self.registry.rename(id, name);
        }
        if let Some(model) = &mut self.topics {
            if self.names.topic_generation == self.topics_fitted_at {
                for (&t, name) in &self.names.topics {
                    let _ = model.rename(t, name);
                }
            }
        }
    }

    /// Deterministic text rendering of every snapshot artifact. Names are
    /// excluded (they live in the overlay), so replaying the journal must
    /// reproduce these bytes exactly.
    pub fn artifacts(&self) -> BTreeMap<&'static str, String> {
        let mut out = BTreeMap::new();
        out.insert("graph.nodes", self.graph.node_table());
        out.insert("graph.edges", self.graph.edge_table());
        let mut users = String::new();
        for u in self.users.iter() {
            users.push_str(&serde_json::to_string(u).expect("user serializes"));
            users.push('\n');
        }
        out.insert("users.jsonl", users);
        let labels = LabelsFile {
            next_id: self.registry.next_id(),
            labels: self
                .registry
                .iter()
                .map(|l| LabelEntry {
                    label_id: l.label_id,
                    created_in_batch: l.created_in_batch,
                })
                .collect(),
        };
        out.insert("labels.json", serde_json::to_string_pretty(&labels).expect("labels serialize") + "\n");
        if let Some(p) = &self.partition {
            out.insert("partition.tsv", p.table());
        }
        if let Some(l) = &self.layout {
            out.insert("layout.state", l.to_text());
        }
        if let Some(t) = &self.topics {
            let mut plain = t.clone();
            plain.labels = (0..t.k).map(TopicModel::default_label).collect();
            out.insert("topics.json", serde_json::to_string(&plain).expect("topics serialize") + "\n");
        }
        out
    }

    fn manifest(&self, files: &BTreeMap<&'static str, String>) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            generation: self.generation,
            platform: self.platform,
            edge_kind: self.graph.kind(),
            batches: self.batches.clone(),
            post_count: self.corpus.len() as u64,
            modularity: self.partition.as_ref().map(|p| p.modularity),
            topics_fitted_at: self.topics_fitted_at,
            embedding_dim: self.embedding_dim,
            files: files.iter().map(|(k, v)| (k.to_string(), digest(v.as_bytes()))).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LabelEntry {
    label_id: LabelId,
    created_in_batch: u64,
}

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    next_id: LabelId,
    labels: Vec<LabelEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub generation: u64,
    pub platform: Platform,
    pub edge_kind: Option<EdgeKind>,
    pub batches: Vec<Batch>,
    pub post_count: u64,
    pub modularity: Option<f64>,
    pub topics_fitted_at: Option<u64>,
    pub embedding_dim: Option<usize>,
    /// sha256 of each artifact file.
    pub files: BTreeMap<String, String>,
}

/// Accepted posts and raw bytes of a batch being committed.
pub struct BatchFiles<'a> {
    pub batch_id: u64,
    pub raw: &'a [u8],
    pub accepted: &'a [Post],
}

/// Points at which a commit can be made to fail, for crash testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashPoint {
    AfterBatchFiles,
    AfterSnapshot,
    AfterJournal,
}

/// Exclusive writer handle; the lock file is removed on drop.
#[derive(Debug)]
pub struct WriteLock {
    dataset: String,
    path: PathBuf,
}

impl WriteLock {
    pub fn dataset(&self) -> &str {
        &self.dataset
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    crash: Mutex<Option<CrashPoint>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    sync_dir(path.parent().expect("file has a parent"));
    Ok(())
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn validate_dataset_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        && !id.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidDatasetId(id.to_string()))
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Store {
            root,
            crash: Mutex::new(None),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Makes the next commit fail at `point`, leaving partial files behind.
    pub fn inject_crash(&self, point: Option<CrashPoint>) {
        *self.crash.lock().expect("crash flag") = point;
    }

    fn crash_at(&self, point: CrashPoint) -> Result<()> {
        let mut slot = self.crash.lock().expect("crash flag");
        if *slot == Some(point) {
            *slot = None;
            return Err(Error::io(
                &self.root,
                std::io::Error::other(format!("injected crash {point:?}")),
            ));
        }
        Ok(())
    }

    pub fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn snapshot_dir(&self, id: &str, generation: u64) -> PathBuf {
        self.dataset_dir(id).join("snapshots").join(format!("{generation:06}"))
    }

    fn batch_path(&self, id: &str, batch_id: u64, ext: &str) -> PathBuf {
        self.dataset_dir(id).join("batches").join(format!("{batch_id:06}.{ext}"))
    }

    pub fn exists(&self, id: &str) -> bool {
        validate_dataset_id(id).is_ok() && self.dataset_dir(id).join("dataset.json").is_file()
    }

    pub fn create(&self, id: &str, platform: Platform) -> Result<DatasetMeta> {
        validate_dataset_id(id)?;
        let dir = self.dataset_dir(id);
        if dir.join("dataset.json").exists() {
            return Err(Error::DatasetExists(id.to_string()));
        }
        for sub in ["batches", "snapshots"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let meta = DatasetMeta {
            format_version: FORMAT_VERSION,
            id: id.to_string(),
            platform,
            created_at: Utc::now().with_nanosecond_zero(),
        };
        write_atomic(&dir.join("dataset.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        Ok(meta)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for e in entries.flatten() {
            if let Some(name) = e.file_name().to_str() {
                if self.exists(name) {
                    out.push(name.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn meta(&self, id: &str) -> Result<DatasetMeta> {
        if !self.exists(id) {
            return Err(Error::UnknownDataset(id.to_string()));
        }
        let path = self.dataset_dir(id).join("dataset.json");
        let meta: DatasetMeta = serde_json::from_str(&read_string(&path)?)
            .map_err(|e| Error::corrupt(&path, e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::corrupt(&path, format!("unsupported format version {}", meta.format_version)));
        }
        Ok(meta)
    }

    /// Takes the dataset's single-writer lock. Fails immediately if held.
    pub fn lock(&self, id: &str) -> Result<WriteLock> {
        self.meta(id)?;
        let path = self.dataset_dir(id).join("LOCK");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                let lock = WriteLock {
                    dataset: id.to_string(),
                    path,
                };
                self.truncate_journal(id)?;
                Ok(lock)
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(id.to_string())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn current_generation(&self, id: &str) -> Result<u64> {
        let path = self.dataset_dir(id).join("CURRENT");
        match fs::read_to_string(&path) {
            Ok(s) => s.trim().parse().map_err(|_| Error::corrupt(&path, "not a generation number")),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    fn read_journal_raw(&self, id: &str) -> Result<(Vec<JournalEntry>, Vec<usize>)> {
        let path = self.dataset_dir(id).join("journal.jsonl");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), Vec::new())),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let mut entries = Vec::new();
        let mut ends = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            offset += line.len();
            if !line.ends_with('\n') {
                break; // torn final write
            }
            let entry: JournalEntry = match serde_json::from_str(line) {
                Ok(e) => e,
                Err(_) => break,
            };
            entries.push(entry);
            ends.push(offset);
        }
        Ok((entries, ends))
    }

    /// Committed journal entries, in order.
    pub fn journal(&self, id: &str) -> Result<Vec<JournalEntry>> {
        self.meta(id)?;
        let current = self.current_generation(id)? as usize;
        let (mut entries, _) = self.read_journal_raw(id)?;
        if entries.len() < current {
            return Err(Error::corrupt(
                self.dataset_dir(id).join("journal.jsonl"),
                format!("journal has {} entries, CURRENT is {current}", entries.len()),
            ));
        }
        entries.truncate(current);
        for (i, e) in entries.iter().enumerate() {
            if e.generation != i as u64 + 1 {
                return Err(Error::corrupt(
                    self.dataset_dir(id).join("journal.jsonl"),
                    format!("entry {} records generation {}", i + 1, e.generation),
                ));
            }
        }
        Ok(entries)
    }

    /// Drops journal bytes beyond the committed generation (left by a crash).
    fn truncate_journal(&self, id: &str) -> Result<()> {
        let current = self.current_generation(id)? as usize;
        let path = self.dataset_dir(id).join("journal.jsonl");
        let (_, ends) = self.read_journal_raw(id)?;
        let keep = if current == 0 { 0 } else { *ends.get(current - 1).unwrap_or(&0) };
        if let Ok(meta) = fs::metadata(&path) {
            if meta.len() as usize != keep {
                let f = OpenOptions::new().write(true).open(&path).map_err(|e| Error::io(&path, e))?;
                f.set_len(keep as u64).map_err(|e| Error::io(&path, e))?;
                f.sync_all().map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }

    /// Batch id of a committed batch with this content digest.
    pub fn find_digest(&self, id: &str, content_digest: &str) -> Result<Option<u64>> {
        Ok(self.journal(id)?.into_iter().find_map(|e| match e.op {
            Operation::Batch { batch, digest, .. } if digest == content_digest => Some(batch.batch_id),
            _ => None,
        }))
    }

    pub fn raw_batch(&self, id: &str, batch_id: u64) -> Result<Vec<u8>> {
        let path = self.batch_path(id, batch_id, "raw");
        fs::read(&path).map_err(|e| Error::io(&path, e))
    }

    pub fn accepted_posts_text(&self, id: &str, batch_id: u64) -> Result<String> {
        read_string(&self.batch_path(id, batch_id, "posts"))
    }

    pub fn names(&self, id: &str) -> Result<NamesOverlay> {
        let path = self.dataset_dir(id).join("names.json");
        match fs::read_to_string(&path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| Error::corrupt(&path, e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(NamesOverlay::default()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn write_names(&self, lock: &WriteLock, names: &NamesOverlay) -> Result<()> {
        let path = self.dataset_dir(&lock.dataset).join("names.json");
        write_atomic(&path, serde_json::to_string_pretty(names)?.as_bytes())
    }

    /// Version tag of the committed state without loading it.
    pub fn version_tag(&self, id: &str) -> Result<String> {
        Ok(format!("g{}-r{}", self.current_generation(id)?, self.names(id)?.revision))
    }

    /// Snapshot artifact bytes as stored for `generation`.
    pub fn snapshot_file(&self, id: &str, generation: u64, name: &str) -> Result<Option<String>> {
        let path = self.snapshot_dir(id, generation).join(name);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn manifest(&self, id: &str, generation: u64) -> Result<Manifest> {
        let path = self.snapshot_dir(id, generation).join("MANIFEST.json");
        let m: Manifest =
            serde_json::from_str(&read_string(&path)?).map_err(|e| Error::corrupt(&path, e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::corrupt(&path, format!("unsupported format version {}", m.format_version)));
        }
        Ok(m)
    }

    /// Atomically publishes `state` as the next generation.
    pub fn commit(
        &self,
        lock: &WriteLock,
        state: &DatasetState,
        entry: &JournalEntry,
        batch: Option<BatchFiles<'_>>,
    ) -> Result<()> {
        let id = lock.dataset.as_str();
        assert_eq!(id, state.id, "lock and state belong to different datasets");
        let current = self.current_generation(id)?;
        if entry.generation != current + 1 || state.generation != entry.generation {
            return Err(Error::InvalidArgument(format!(
                "commit of generation {} on top of {current}",
                entry.generation
            )));
        }

        if let Some(b) = &batch {
            write_synced(&self.batch_path(id, b.batch_id, "raw"), b.raw)?;
            let mut posts = String::new();
            for p in b.accepted {
                posts.push_str(&p.to_record());
                posts.push('\n');
            }
            write_synced(&self.batch_path(id, b.batch_id, "posts"), posts.as_bytes())?;
        }
        self.crash_at(CrashPoint::AfterBatchFiles)?;

        let final_dir = self.snapshot_dir(id, entry.generation);
        let tmp_dir = final_dir.with_extension("tmp");
        for stale in [&tmp_dir, &final_dir] {
            if stale.exists() {
                fs::remove_dir_all(stale).map_err(|e| Error::io(stale, e))?;
            }
        }
        fs::create_dir_all(&tmp_dir).map_err(|e| Error::io(&tmp_dir, e))?;
        let files = state.artifacts();
        for (name, body) in &files {
            write_synced(&tmp_dir.join(name), body.as_bytes())?;
        }
        let manifest = state.manifest(&files);
        write_synced(&tmp_dir.join("MANIFEST.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        sync_dir(&tmp_dir);
        fs::rename(&tmp_dir, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
        sync_dir(final_dir.parent().expect("snapshots dir"));
        self.crash_at(CrashPoint::AfterSnapshot)?;

        let journal = self.dataset_dir(id).join("journal.jsonl");
        {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&journal)
                .map_err(|e| Error::io(&journal, e))?;
            let mut line = serde_json::to_string(entry)?;
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| Error::io(&journal, e))?;
            f.sync_all().map_err(|e| Error::io(&journal, e))?;
        }
        self.crash_at(CrashPoint::AfterJournal)?;

        write_atomic(
            &self.dataset_dir(id).join("CURRENT"),
            format!("{}\n", entry.generation).as_bytes(),
        )
    }

    /// Loads the committed state, with the name overlay applied.
    pub fn load(&self, id: &str) -> Result<DatasetState> {
        let generation = self.current_generation(id)?;
        let mut state = self.load_generation(id, generation)?;
        state.names = self.names(id)?;
        state.apply_names();
        Ok(state)
    }

    /// Loads the snapshot of `generation` without the name overlay.
    pub fn load_generation(&self, id: &str, generation: u64) -> Result<DatasetState> {
        let meta = self.meta(id)?;
        let mut state = DatasetState::empty(id, meta.platform);
        if generation == 0 {
            return Ok(state);
        }
        let dir = self.snapshot_dir(id, generation);
        let manifest = self.manifest(id, generation)?;
        let file = |name: &str| -> Result<Option<String>> {
            let body = self.snapshot_file(id, generation, name)?;
            match (&body, manifest.files.get(name)) {
                (Some(b), Some(d)) if digest(b.as_bytes()) != *d => {
                    Err(Error::corrupt(dir.join(name), "content digest does not match MANIFEST"))
                }
                (Some(_), None) | (None, Some(_)) => {
                    Err(Error::corrupt(dir.join(name), "file set does not match MANIFEST"))
                }
                _ => Ok(body),
            }
        };
        let corrupt = |name: &str, reason: String| Error::corrupt(dir.join(name), reason);

        state.generation = manifest.generation;
        state.batches = manifest.batches.clone();
        state.topics_fitted_at = manifest.topics_fitted_at;
        state.embedding_dim = manifest.embedding_dim;
        state.graph = InteractionGraph::from_tables(
            manifest.edge_kind,
            &file("graph.nodes")?.unwrap_or_default(),
            &file("graph.edges")?.unwrap_or_default(),
        )
        .map_err(|e| corrupt("graph.edges", e))?;
        for line in file("users.jsonl")?.unwrap_or_default().lines() {
            let u: User = serde_json::from_str(line).map_err(|e| corrupt("users.jsonl", e.to_string()))?;
            state.users.upsert(u);
        }
        let labels: LabelsFile = serde_json::from_str(&file("labels.json")?.unwrap_or_default())
            .map_err(|e| corrupt("labels.json", e.to_string()))?;
        state.registry = LabelRegistry::from_parts(
            labels
                .labels
                .into_iter()
                .map(|l| CommunityLabel {
                    label_id: l.label_id,
                    name: CommunityLabel::default_name(l.label_id),
                    created_in_batch: l.created_in_batch,
                })
                .collect(),
            labels.next_id,
        );
        if let Some(t) = file("partition.tsv")? {
            let q = manifest.modularity.unwrap_or(0.0);
            state.partition = Some(Partition::from_table(&t, q).map_err(|e| corrupt("partition.tsv", e))?);
        }
        if let Some(t) = file("layout.state")? {
            state.layout = Some(LayoutState::from_text(&t).map_err(|e| corrupt("layout.state", e))?);
        }
        if let Some(t) = file("topics.json")? {
            let mut model: TopicModel =
                serde_json::from_str(&t).map_err(|e| corrupt("topics.json", e.to_string()))?;
            model.reindex();
            state.topics = Some(model);
        }

        let mut corpus = Corpus::new();
        for b in &state.batches {
            let path = self.batch_path(id, b.batch_id, "posts");
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                let post = parse_record(line.as_bytes())
                    .map_err(|e| Error::corrupt(&path, format!("line {}: {e}", n + 1)))?;
                corpus.push(post);
            }
        }
        if corpus.len() as u64 != manifest.post_count {
            return Err(Error::corrupt(
                dir.join("MANIFEST.json"),
                format!("expected {} posts, batch files hold {}", manifest.post_count, corpus.len()),
            ));
        }
        state.corpus = Arc::new(corpus);
        Ok(state)
    }
}

trait NanosecondZero {
    fn with_nanosecond_zero(self) -> Self;
}

impl NanosecondZero for DateTime<Utc> {
    fn with_nanosecond_zero(self) -> Self {
        DateTime::from_timestamp(self.timestamp(), 0).expect("valid timestamp")
    }
}
