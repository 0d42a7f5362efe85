//! Filtered aggregations over the post corpus.
//!
//! [`Corpus`] is an append-only store with an inverted token index and
//! columnar field arrays. [`Analytics`] binds a corpus to the community
//! partition and topic model of one committed snapshot and answers every
//! dashboard query from those indexes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::community::{LabelId, LabelRegistry, Partition};
use crate::error::{Error, Result};
use crate::model::{format_timestamp, FilterSpec, Platform, Post, Sentiment};
use crate::par::Execution;
use crate::text::{is_stopword, tokenize};
use crate::topics::TopicModel;

const NONE: u32 = u32::MAX;

/// Append-only post store with token postings and columnar fields.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    by_id: HashMap<String, u32>,
    created: Vec<i64>,
    language: Vec<u32>,
    languages: Vec<String>,
    language_ids: HashMap<String, u32>,
    by_language: Vec<Vec<u32>>,
    sentiment: Vec<u8>,
    by_sentiment: [Vec<u32>; 4],
    terms: Vec<String>,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<u32>>,
    post_terms: Vec<Box<[u32]>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> Self {
        let mut c = Corpus::new();
        for p in posts {
            c.push(p);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn post(&self, idx: u32) -> &Post {
        &self.posts[idx as usize]
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Appends a post. Returns false (and stores nothing) for a duplicate id.
    pub fn push(&mut self, post: Post) -> bool {
        if self.by_id.contains_key(&post.id) {
            return false;
        }
        let idx = self.posts.len() as u32;
        self.by_id.insert(post.id.clone(), idx);
        self.created.push(post.created_at.timestamp());

        let lang = match self.language_ids.get(&post.language) {
            Some(&l) => l,
            None => {
                let l = self.languages.len() as u32;
                self.languages.push(post.language.clone());
                self.language_ids.insert(post.language.clone(), l);
                self.by_language.push(Vec::new());
                l
            }
        };
        self.language.push(lang);
        self.by_language[lang as usize].push(idx);
        self.sentiment.push(post.sentiment.index() as u8);
        self.by_sentiment[post.sentiment.index()].push(idx);

        let distinct: BTreeSet<String> = tokenize(&post.text).into_iter().collect();
        let mut ids = Vec::with_capacity(distinct.len());
        for term in distinct {
            let t = match self.term_ids.get(&term) {
                Some(&t) => t,
                None => {
                    let t = self.terms.len() as u32;
                    self.term_ids.insert(term.clone(), t);
                    self.terms.push(term);
                    self.postings.push(Vec::new());
                    t
                }
            };
            self.postings[t as usize].push(idx);
            ids.push(t);
        }
        self.post_terms.push(ids.into_boxed_slice());
        self.posts.push(post);
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Hour,
    Day,
    Week,
}

impl std::str::FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hour" => Ok(Granularity::Hour),
            "day" => Ok(Granularity::Day),
            "week" => Ok(Granularity::Week),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

const DAY: i64 = 86_400;
/// 1970-01-01 was a Thursday; weeks start on Monday.
const WEEK_OFFSET: i64 = 3 * DAY;

impl Granularity {
    /// Bucket number containing `ts` (seconds since the epoch).
    pub fn bucket(self, ts: i64) -> i64 {
        match self {
            Granularity::Hour => ts.div_euclid(3_600),
            Granularity::Day => ts.div_euclid(DAY),
            Granularity::Week => (ts + WEEK_OFFSET).div_euclid(7 * DAY),
        }
    }

    /// Start of bucket `b` in seconds since the epoch.
    pub fn bucket_start(self, b: i64) -> i64 {
        match self {
            Granularity::Hour => b * 3_600,
            Granularity::Day => b * DAY,
            Granularity::Week => b * 7 * DAY - WEEK_OFFSET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Language,
    Sentiment,
}

impl std::str::FromStr for Field {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "language" => Ok(Field::Language),
            "sentiment" => Ok(Field::Sentiment),
            other => Err(format!("unknown distribution field `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Posts,
    Urls,
    Hashtags,
}

impl std::str::FromStr for ContentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "posts" => Ok(ContentKind::Posts),
            "urls" => Ok(ContentKind::Urls),
            "hashtags" => Ok(ContentKind::Hashtags),
            other => Err(format!("unknown content kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMode {
    Counts,
    Proportions,
}

impl std::str::FromStr for MatrixMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "counts" => Ok(MatrixMode::Counts),
            "proportions" => Ok(MatrixMode::Proportions),
            other => Err(format!("unknown matrix mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBucket {
    pub start: String,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<BTreeMap<Sentiment, u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item: String,
    pub score: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub label_id: LabelId,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixColumn {
    pub topic: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "values", rename_all = "lowercase")]
pub enum MatrixValues {
    Counts(Vec<Vec<u64>>),
    Proportions(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: Vec<MatrixRow>,
    pub columns: Vec<MatrixColumn>,
    #[serde(flatten)]
    pub values: MatrixValues,
}

/// Tagged payload of every aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationResult {
    TimeSeries {
        granularity: Granularity,
        buckets: Vec<TimeBucket>,
    },
    Categorical {
        counts: BTreeMap<String, u64>,
    },
    /// The visualisation does not exist for this dataset type.
    CapabilityAbsent {
        reason: String,
    },
    Ranked {
        items: Vec<RankedItem>,
    },
    Matrix(Matrix),
}

/// Read-only query view over one committed snapshot.
#[derive(Clone, Debug)]
pub struct Analytics {
    corpus: Arc<Corpus>,
    platform: Platform,
    exec: Execution,
    /// Community index of each post's author, or `NONE`.
    post_community: Vec<u32>,
    communities: Vec<MatrixRow>,
    label_community: HashMap<LabelId, u32>,
    community_label: Vec<LabelId>,
    post_topic: Vec<u32>,
    topic_names: Option<Vec<String>>,
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn rank(mut items: Vec<RankedItem>, k: usize) -> Vec<RankedItem> {
    items.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.item.cmp(&b.item)));
    items.truncate(k);
    items
}

/// Hashtag key: lowercase without leading `#`.
pub fn normalize_hashtag(tag: &str) -> String {
    tag.trim_start_matches(['#', '＃']).to_lowercase()
}

impl Analytics {
    pub fn new(
        corpus: Arc<Corpus>,
        platform: Platform,
        partition: Option<&Partition>,
        registry: &LabelRegistry,
        topics: Option<&TopicModel>,
        exec: Execution,
    ) -> Self {
        let community_label: Vec<LabelId> = partition
            .map(|p| (0..p.community_count()).map(|c| p.label(c)).collect())
            .unwrap_or_default();
        let (post_community, communities, label_community) = match partition {
            Some(part) => {
                let user_comm: HashMap<&str, u32> = part
                    .users()
                    .iter()
                    .zip(part.communities())
                    .map(|(u, &c)| (u.as_str(), c as u32))
                    .collect();
                let pc = exec.map_slice(corpus.posts(), |p| {
                    user_comm.get(p.author_id.as_str()).copied().unwrap_or(NONE)
                });
                let mut rows: Vec<(LabelId, u32)> = (0..part.community_count())
                    .map(|c| (part.label(c), c as u32))
                    .collect();
                rows.sort();
                let lc = rows.iter().copied().collect();
                let rows = rows
                    .iter()
                    .map(|&(l, _)| MatrixRow {
                        label_id: l,
                        name: registry.name(l),
                    })
                    .collect();
                (pc, rows, lc)
            }
            None => (vec![NONE; corpus.len()], Vec::new(), HashMap::new()),
        };
        let (post_topic, topic_names) = match topics {
            Some(model) => (
                exec.map_slice(corpus.posts(), |p| {
                    model.topic_of(&p.id).map_or(NONE, |t| t as u32)
                }),
                Some(model.labels.clone()),
            ),
            None => (vec![NONE; corpus.len()], None),
        };
        Analytics {
            corpus,
            platform,
            exec,
            post_community,
            communities,
            label_community,
            community_label,
            post_topic,
            topic_names,
        }
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn platform(&self) -> Platform {
        self.platform
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Community label id of a post's author, if the author is partitioned.
    pub fn community_label_of(&self, idx: u32) -> Option<LabelId> {
        let c = self.post_community[idx as usize];
        (c != NONE).then(|| self.community_label[c as usize])
    }

    pub fn topic_of(&self, idx: u32) -> Option<usize> {
        let t = self.post_topic[idx as usize];
        (t != NONE).then_some(t as usize)
    }

    /// Indices (ascending) of the posts satisfying every present filter field.
    pub fn select(&self, filter: &FilterSpec) -> Result<Vec<u32>> {
        let c = &self.corpus;
        let community = match filter.community {
            Some(label) => Some(
                *self
                    .label_community
                    .get(&label)
                    .ok_or(Error::UnknownCommunity(label))?,
            ),
            None => None,
        };
        let topic = match filter.topic {
            Some(t) => {
                let names = self.topic_names.as_ref().ok_or(Error::NoTopicModel)?;
                if t >= names.len() {
                    return Err(Error::UnknownTopic(t));
                }
                Some(t as u32)
            }
            None => None,
        };
        let range = match &filter.date_range {
            Some(r) if r.start > r.end => {
                return Err(Error::InvalidFilter("date range start is after its end".into()))
            }
            Some(r) => Some((r.start.timestamp(), r.end.timestamp())),
            None => None,
        };

        // narrowest posting list first
        let mut candidates: Option<Vec<u32>> = None;
        if let Some(keywords) = &filter.keywords {
            let mut terms = Vec::new();
            for kw in keywords {
                let toks = tokenize(kw);
                if toks.is_empty() {
                    return Err(Error::InvalidFilter(format!("keyword `{kw}` has no searchable token")));
                }
                terms.extend(toks);
            }
            let mut lists: Vec<&[u32]> = Vec::new();
            for t in &terms {
                match c.term_ids.get(t) {
                    Some(&id) => lists.push(&c.postings[id as usize]),
                    None => return Ok(Vec::new()),
                }
            }
            lists.sort_by_key(|l| l.len());
            let mut acc = lists[0].to_vec();
            for l in &lists[1..] {
                acc = intersect(&acc, l);
            }
            candidates = Some(acc);
        }
        let language = match &filter.language {
            Some(l) => match c.language_ids.get(l) {
                Some(&id) => Some(id),
                None => return Ok(Vec::new()),
            },
            None => None,
        };
        let sentiment = filter.sentiment.map(|s| s.index() as u8);
        if candidates.is_none() {
            if let Some(l) = language {
                candidates = Some(c.by_language[l as usize].clone());
            } else if let Some(s) = sentiment {
                candidates = Some(c.by_sentiment[s as usize].clone());
            }
        }

        let keep = |i: u32| {
            let i = i as usize;
            if let Some((lo, hi)) = range {
                if c.created[i] < lo || c.created[i] > hi {
                    return false;
                }
            }
            if language.is_some_and(|l| c.language[i] != l) {
                return false;
            }
            if sentiment.is_some_and(|s| c.sentiment[i] != s) {
                return false;
            }
            if community.is_some_and(|k| self.post_community[i] != k) {
                return false;
            }
            if topic.is_some_and(|t| self.post_topic[i] != t) {
                return false;
            }
            true
        };
        Ok(match candidates {
            Some(ids) => self.exec.filter_ids(&ids, keep),
            None => self.exec.filter_range(c.len(), |i| keep(i as u32)),
        })
    }

    pub fn count(&self, filter: &FilterSpec) -> Result<usize> {
        Ok(self.select(filter)?.len())
    }

    /// Zero-filled counts per bucket between the first and last matching post.
    pub fn timeline(&self, filter: &FilterSpec, granularity: Granularity, split_by_sentiment: bool) -> Result<AggregationResult> {
        let ids = self.select(filter)?;
        let buckets_of = self
            .exec
            .map_slice(&ids, |&i| granularity.bucket(self.corpus.created[i as usize]));
        let mut buckets = Vec::new();
        if let (Some(&lo), Some(&hi)) = (buckets_of.iter().min(), buckets_of.iter().max()) {
            let width = (hi - lo + 1) as usize;
            let mut counts = vec![0u64; width];
            let mut split = vec![[0u64; 4]; if split_by_sentiment { width } else { 0 }];
            for (&b, &i) in buckets_of.iter().zip(&ids) {
                let slot = (b - lo) as usize;
                counts[slot] += 1;
                if split_by_sentiment {
                    split[slot][self.corpus.sentiment[i as usize] as usize] += 1;
                }
            }
            for (slot, count) in counts.into_iter().enumerate() {
                let start = granularity.bucket_start(lo + slot as i64);
                let start = DateTime::<Utc>::from_timestamp(start, 0).expect("timestamp in range");
                buckets.push(TimeBucket {
                    start: format_timestamp(&start),
                    count,
                    sentiment: split_by_sentiment
                        .then(|| Sentiment::ALL.iter().map(|&s| (s, split[slot][s.index()])).collect()),
                });
            }
        }
        Ok(AggregationResult::TimeSeries { granularity, buckets })
    }

    pub fn distribution(&self, filter: &FilterSpec, field: Field) -> Result<AggregationResult> {
        let ids = self.select(filter)?;
        let c = &self.corpus;
        let mut counts = BTreeMap::new();
        match field {
            Field::Language => {
                let mut tally = vec![0u64; c.languages.len()];
                for &i in &ids {
                    tally[c.language[i as usize] as usize] += 1;
                }
                for (l, n) in tally.into_iter().enumerate() {
                    if n > 0 {
                        counts.insert(c.languages[l].clone(), n);
                    }
                }
            }
            Field::Sentiment => {
                let mut tally = [0u64; 4];
                for &i in &ids {
                    tally[c.sentiment[i as usize] as usize] += 1;
                }
                for s in Sentiment::ALL {
                    if tally[s.index()] > 0 {
                        counts.insert(s.as_str().to_string(), tally[s.index()]);
                    }
                }
            }
        }
        Ok(AggregationResult::Categorical { counts })
    }

    /// Country counts for twitter datasets; capability-absent for youtube.
    pub fn geo_distribution(&self, filter: &FilterSpec) -> Result<AggregationResult> {
        if self.platform == Platform::Youtube {
            // still validate the filter so errors are uniform across endpoints
            self.select(filter)?;
            return Ok(AggregationResult::CapabilityAbsent {
                reason: "geolocation is not available for youtube datasets".into(),
            });
        }
        let mut counts = BTreeMap::new();
        for i in self.select(filter)? {
            if let Some(country) = &self.corpus.post(i).country {
                *counts.entry(country.clone()).or_insert(0) += 1;
            }
        }
        Ok(AggregationResult::Categorical { counts })
    }

    pub fn top_content(&self, filter: &FilterSpec, kind: ContentKind, k: usize) -> Result<AggregationResult> {
        let ids = self.select(filter)?;
        let items = match kind {
            ContentKind::Posts => ids
                .iter()
                .map(|&i| {
                    let p = self.corpus.post(i);
                    RankedItem {
                        item: p.id.clone(),
                        score: p.engagement,
                    }
                })
                .collect(),
            ContentKind::Urls | ContentKind::Hashtags => {
                let mut freq: HashMap<String, u64> = HashMap::new();
                for &i in &ids {
                    let p = self.corpus.post(i);
                    let distinct: BTreeSet<String> = match kind {
                        ContentKind::Urls => p.urls.iter().cloned().collect(),
                        _ => p.hashtags.iter().map(|h| normalize_hashtag(h)).filter(|h| !h.is_empty()).collect(),
                    };
                    for item in distinct {
                        *freq.entry(item).or_insert(0) += 1;
                    }
                }
                freq.into_iter().map(|(item, score)| RankedItem { item, score }).collect()
            }
        };
        Ok(AggregationResult::Ranked { items: rank(items, k) })
    }

    /// Top terms by document frequency, excluding each post's language stoplist.
    pub fn wordcloud_terms(&self, filter: &FilterSpec, k: usize) -> Result<AggregationResult> {
        let ids = self.select(filter)?;
        let c = &self.corpus;
        let mut df = vec![0u64; c.terms.len()];
        // stopword status is per (language, term); cache it lazily
        let mut stop: HashMap<(u32, u32), bool> = HashMap::new();
        for &i in &ids {
            let lang = c.language[i as usize];
            for &t in c.post_terms[i as usize].iter() {
                let is_stop = *stop
                    .entry((lang, t))
                    .or_insert_with(|| is_stopword(&c.languages[lang as usize], &c.terms[t as usize]));
                if !is_stop {
                    df[t as usize] += 1;
                }
            }
        }
        let items = df
            .into_iter()
            .enumerate()
            .filter(|&(_, n)| n > 0)
            .map(|(t, n)| RankedItem {
                item: c.terms[t].clone(),
                score: n,
            })
            .collect();
        Ok(AggregationResult::Ranked { items: rank(items, k) })
    }

    /// Community × topic cross-tab over matching posts; rows ordered by label id.
    pub fn topics_per_community(&self, filter: &FilterSpec, mode: MatrixMode) -> Result<AggregationResult> {
        let names = self.topic_names.as_ref().ok_or(Error::NoTopicModel)?;
        let ids = self.select(filter)?;
        let row_of: HashMap<u32, usize> = self
            .communities
            .iter()
            .enumerate()
            .map(|(r, row)| (self.label_community[&row.label_id], r))
            .collect();
        let mut counts = vec![vec![0u64; names.len()]; self.communities.len()];
        for &i in &ids {
            let (comm, topic) = (self.post_community[i as usize], self.post_topic[i as usize]);
            if comm == NONE || topic == NONE {
                continue;
            }
            counts[row_of[&comm]][topic as usize] += 1;
        }
        let values = match mode {
            MatrixMode::Counts => MatrixValues::Counts(counts),
            MatrixMode::Proportions => MatrixValues::Proportions(
                counts
                    .into_iter()
                    .map(|row| {
                        let total: u64 = row.iter().sum();
                        row.into_iter()
                            .map(|n| if total == 0 { 0.0 } else { n as f64 / total as f64 })
                            .collect()
                    })
                    .collect(),
            ),
        };
        Ok(AggregationResult::Matrix(Matrix {
            rows: self.communities.clone(),
            columns: names
                .iter()
                .enumerate()
                .map(|(topic, name)| MatrixColumn {
                    topic,
                    name: name.clone(),
                })
                .collect(),
            values,
        }))
    }

    /// Matching posts in ingestion order, paged.
    pub fn posts(&self, filter: &FilterSpec, offset: usize, limit: usize) -> Result<(usize, Vec<&Post>)> {
        let ids = self.select(filter)?;
        let page = ids
            .iter()
            .skip(offset)
            .take(limit)
            .map(|&i| self.corpus.post(i))
            .collect();
        Ok((ids.len(), page))
    }
}
