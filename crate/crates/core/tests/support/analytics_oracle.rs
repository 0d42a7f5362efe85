//! Linear-scan reference implementation of the analytics queries plus a
//! synthetic corpus generator. Shared by the core integration tests and the
//! acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socnet_core::analytics::{
    AggregationResult, ContentKind, Field, Granularity, Matrix, MatrixColumn, MatrixMode, MatrixRow,
    MatrixValues, RankedItem, TimeBucket,
};
use socnet_core::community::LabelId;
use socnet_core::model::{format_timestamp, DateRange};
use socnet_core::text::stopwords;
use socnet_core::{FilterSpec, Platform, Post, Sentiment};

const VOCAB: &[&str] = &[
    "match", "goal", "Goal", "team", "the", "and", "le", "de", "la", "y", "fans", "concert",
    "café", "über", "night", "day", "big", "BIG", "win", "lose", "vote", "claim", "fake",
    "news", "music", "kpop", "football", "London", "paris", "tokyo", "new", "video", "watch",
    "love", "hate", "election", "policy", "price", "market", "game", "score", "ticket",
];
const LANGS: &[&str] = &["en", "fr", "es", "ja", "und"];
const COUNTRIES: &[&str] = &["GB", "FR", "JP", "US"];
const TAGS: &[&str] = &["#Goal", "#goal", "#KPop", "#news", "#vote"];
const URLS: &[&str] = &["https://a.example/1", "https://b.example/2", "https://c.example/3"];
pub const EPOCH: i64 = 1_704_067_200; // 2024-01-01T00:00:00Z
pub const SPAN: i64 = 60 * 86_400;

/// Everything the oracle needs to know about one snapshot.
pub struct World {
    pub platform: Platform,
    pub posts: Vec<Post>,
    pub author_label: HashMap<String, LabelId>,
    /// Rows in label-id order, with names.
    pub communities: Vec<(LabelId, String)>,
    pub post_topic: HashMap<String, usize>,
    pub topic_names: Option<Vec<String>>,
}

pub fn synthetic_posts(n: usize, authors: usize, seed: u64, platform: Platform) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let words = rng.random_range(2..10);
            let mut text: Vec<String> = (0..words).map(|_| VOCAB.choose(&mut rng).unwrap().to_string()).collect();
            if rng.random_bool(0.2) {
                text.push(format!("@u{}", rng.random_range(0..authors)));
            }
            if rng.random_bool(0.2) {
                text.push(URLS.choose(&mut rng).unwrap().to_string());
            }
            if rng.random_bool(0.2) {
                text.push(TAGS.choose(&mut rng).unwrap().to_string());
            }
            if rng.random_bool(0.2) {
                let last = text.len() - 1;
                text[last].push('!');
            }
            let ts = EPOCH + rng.random_range(0..SPAN);
            let mut p = Post::new(
                format!("p{i:06}"),
                platform,
                format!("u{}", rng.random_range(0..authors)),
                text.join(" "),
                DateTime::from_timestamp(ts, 0).unwrap(),
            );
            p.language = LANGS.choose(&mut rng).unwrap().to_string();
            p.sentiment = Sentiment::ALL[rng.random_range(0..4)];
            p.engagement = rng.random_range(0..50);
            let tags = rng.random_range(0..3);
            p.hashtags = (0..tags).map(|_| TAGS.choose(&mut rng).unwrap().to_string()).collect();
            let urls = rng.random_range(0..3);
            p.urls = (0..urls).map(|_| URLS.choose(&mut rng).unwrap().to_string()).collect();
            if platform == Platform::Twitter && rng.random_bool(0.6) {
                p.country = Some(COUNTRIES.choose(&mut rng).unwrap().to_string());
            }
            if rng.random_bool(0.8) {
                let c = rng.random_range(0..3) as f32 * 10.0;
                p.embedding = Some((0..4).map(|_| c + rng.random_range(-1.0..1.0)).collect());
            }
            p
        })
        .collect()
}

pub fn random_filter(rng: &mut impl Rng, world: &World) -> FilterSpec {
    let mut f = FilterSpec::default();
    if rng.random_bool(0.4) {
        let n = rng.random_range(1..3);
        f.keywords = Some((0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect());
    }
    if rng.random_bool(0.3) {
        let a = EPOCH + rng.random_range(-86_400..SPAN);
        let b = a + rng.random_range(0..SPAN / 2);
        f.date_range = Some(DateRange {
            start: DateTime::from_timestamp(a, 0).unwrap(),
            end: DateTime::from_timestamp(b, 0).unwrap(),
        });
    }
    if rng.random_bool(0.3) {
        f.language = Some(if rng.random_bool(0.9) { LANGS.choose(rng).unwrap().to_string() } else { "zz".into() });
    }
    if rng.random_bool(0.3) {
        f.sentiment = Some(Sentiment::ALL[rng.random_range(0..4)]);
    }
    if rng.random_bool(0.3) && !world.communities.is_empty() {
        f.community = Some(world.communities.choose(rng).unwrap().0);
    }
    if rng.random_bool(0.25) {
        if let Some(names) = &world.topic_names {
            f.topic = Some(rng.random_range(0..names.len()));
        }
    }
    f
}

/// Independent tokenizer: whitespace chunks, drop mentions and links, split
/// on anything that is not alphanumeric, lowercase.
pub fn oracle_tokens(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        if lower.starts_with('@') || lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            continue;
        }
        for w in lower.split(|c: char| !c.is_alphanumeric()) {
            if !w.is_empty() {
                out.insert(w.to_string());
            }
        }
    }
    out
}

#[derive(Debug, PartialEq)]
pub enum OracleError {
    UnknownCommunity,
    UnknownTopic,
    NoTopicModel,
    Invalid,
}

impl World {
    pub fn select(&self, f: &FilterSpec) -> Result<Vec<usize>, OracleError> {
        if let Some(c) = f.community {
            if !self.communities.iter().any(|(l, _)| *l == c) {
                return Err(OracleError::UnknownCommunity);
            }
        }
        if let Some(t) = f.topic {
            match &self.topic_names {
                None => return Err(OracleError::NoTopicModel),
                Some(n) if t >= n.len() => return Err(OracleError::UnknownTopic),
                _ => {}
            }
        }
        if let Some(r) = &f.date_range {
            if r.start > r.end {
                return Err(OracleError::Invalid);
            }
        }
        let mut wanted = Vec::new();
        for kw in f.keywords.iter().flatten() {
            let toks = oracle_tokens(kw);
            if toks.is_empty() {
                return Err(OracleError::Invalid);
            }
            wanted.extend(toks);
        }
        Ok(self
            .posts
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let toks = oracle_tokens(&p.text);
                wanted.iter().all(|w| toks.contains(w))
                    && f.date_range.as_ref().is_none_or(|r| r.start <= p.created_at && p.created_at <= r.end)
                    && f.language.as_ref().is_none_or(|l| *l == p.language)
                    && f.sentiment.is_none_or(|s| s == p.sentiment)
                    && f.community.is_none_or(|c| self.author_label.get(&p.author_id) == Some(&c))
                    && f.topic.is_none_or(|t| self.post_topic.get(&p.id) == Some(&t))
            })
            .map(|(i, _)| i)
            .collect())
    }

    pub fn timeline(&self, f: &FilterSpec, g: Granularity, split: bool) -> Result<AggregationResult, OracleError> {
        let ids = self.select(f)?;
        let unit = match g {
            Granularity::Hour => 3_600,
            Granularity::Day => 86_400,
            Granularity::Week => 7 * 86_400,
        };
        // Monday 1969-12-29 anchors week buckets
        let anchor = if g == Granularity::Week { -3 * 86_400 } else { 0 };
        let start_of = |ts: i64| anchor + (ts - anchor).div_euclid(unit) * unit;
        let mut per: BTreeMap<i64, Vec<Sentiment>> = BTreeMap::new();
        for &i in &ids {
            per.entry(start_of(self.posts[i].created_at.timestamp())).or_default().push(self.posts[i].sentiment);
        }
        let mut buckets = Vec::new();
        if let (Some(&lo), Some(&hi)) = (per.keys().next(), per.keys().last()) {
            let mut t = lo;
            while t <= hi {
                let members = per.get(&t).cloned().unwrap_or_default();
                buckets.push(TimeBucket {
                    start: format_timestamp(&DateTime::<Utc>::from_timestamp(t, 0).unwrap()),
                    count: members.len() as u64,
                    sentiment: split.then(|| {
                        Sentiment::ALL
                            .iter()
                            .map(|&s| (s, members.iter().filter(|&&m| m == s).count() as u64))
                            .collect()
                    }),
                });
                t += unit;
            }
        }
        Ok(AggregationResult::TimeSeries { granularity: g, buckets })
    }

    pub fn distribution(&self, f: &FilterSpec, field: Field) -> Result<AggregationResult, OracleError> {
        let mut counts = BTreeMap::new();
        for i in self.select(f)? {
            let key = match field {
                Field::Language => self.posts[i].language.clone(),
                Field::Sentiment => self.posts[i].sentiment.to_string(),
            };
            *counts.entry(key).or_insert(0) += 1;
        }
        Ok(AggregationResult::Categorical { counts })
    }

    pub fn geo(&self, f: &FilterSpec) -> Result<Option<BTreeMap<String, u64>>, OracleError> {
        let ids = self.select(f)?;
        if self.platform == Platform::Youtube {
            return Ok(None);
        }
        let mut counts = BTreeMap::new();
        for i in ids {
            if let Some(c) = &self.posts[i].country {
                *counts.entry(c.clone()).or_insert(0) += 1;
            }
        }
        Ok(Some(counts))
    }

    fn ranked(mut items: Vec<(String, u64)>, k: usize) -> AggregationResult {
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        items.truncate(k);
        AggregationResult::Ranked {
            items: items.into_iter().map(|(item, score)| RankedItem { item, score }).collect(),
        }
    }

    pub fn top(&self, f: &FilterSpec, kind: ContentKind, k: usize) -> Result<AggregationResult, OracleError> {
        let ids = self.select(f)?;
        let items = match kind {
            ContentKind::Posts => ids.iter().map(|&i| (self.posts[i].id.clone(), self.posts[i].engagement)).collect(),
            ContentKind::Urls | ContentKind::Hashtags => {
                let mut freq: BTreeMap<String, u64> = BTreeMap::new();
                for &i in &ids {
                    let p = &self.posts[i];
                    let set: BTreeSet<String> = if kind == ContentKind::Urls {
                        p.urls.iter().cloned().collect()
                    } else {
                        p.hashtags.iter().map(|h| h.trim_start_matches('#').to_lowercase()).filter(|h| !h.is_empty()).collect()
                    };
                    for s in set {
                        *freq.entry(s).or_insert(0) += 1;
                    }
                }
                freq.into_iter().collect()
            }
        };
        Ok(Self::ranked(items, k))
    }

    pub fn wordcloud(&self, f: &FilterSpec, k: usize) -> Result<AggregationResult, OracleError> {
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        for i in self.select(f)? {
            let p = &self.posts[i];
            let stop = stopwords(&p.language);
            for t in oracle_tokens(&p.text) {
                if !stop.contains(&t.as_str()) {
                    *df.entry(t).or_insert(0) += 1;
                }
            }
        }
        Ok(Self::ranked(df.into_iter().collect(), k))
    }

    pub fn cross_tab(&self, f: &FilterSpec, mode: MatrixMode) -> Result<AggregationResult, OracleError> {
        let names = self.topic_names.as_ref().ok_or(OracleError::NoTopicModel)?;
        let ids = self.select(f)?;
        let mut counts = vec![vec![0u64; names.len()]; self.communities.len()];
        for i in ids {
            let p = &self.posts[i];
            let (Some(l), Some(&t)) = (self.author_label.get(&p.author_id), self.post_topic.get(&p.id)) else {
                continue;
            };
            let row = self.communities.iter().position(|(x, _)| x == l).unwrap();
            counts[row][t] += 1;
        }
        let values = match mode {
            MatrixMode::Counts => MatrixValues::Counts(counts),
            MatrixMode::Proportions => MatrixValues::Proportions(
                counts
                    .iter()
                    .map(|row| {
                        let total: u64 = row.iter().sum();
                        row.iter().map(|&n| if total == 0 { 0.0 } else { n as f64 / total as f64 }).collect()
                    })
                    .collect(),
            ),
        };
        Ok(AggregationResult::Matrix(Matrix {
            rows: self.communities.iter().map(|(l, n)| MatrixRow { label_id: *l, name: n.clone() }).collect(),
            columns: names.iter().enumerate().map(|(topic, name)| MatrixColumn { topic, name: name.clone() }).collect(),
            values,
        }))
    }
}

/// Builds the system under test and the oracle world over the same corpus:
/// authors are spread over `communities` labelled communities (one renamed)
/// and topics come from a fitted k=3 model.
pub fn build(
    posts: Vec<Post>,
    platform: Platform,
    communities: usize,
    seed: u64,
    exec: socnet_core::Execution,
) -> (socnet_core::analytics::Analytics, World) {
    use socnet_core::analytics::{Analytics, Corpus};
    use socnet_core::community::{LabelRegistry, Partition};
    use socnet_core::topics::TopicModel;
    use std::sync::Arc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<String> = posts.iter().map(|p| p.author_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    // leave some authors outside the partition
    users.retain(|_| rng.random_bool(0.9));
    let mut registry = LabelRegistry::new();
    let mut labels: Vec<LabelId> = (0..communities).map(|_| registry.mint(1)).collect();
    // label ids need not follow community index order
    labels.reverse();
    registry.rename(labels[0], "K-pop fans");
    let assign: Vec<usize> = users.iter().enumerate().map(|(i, _)| i % communities).collect();
    let partition = Partition::new(users.clone(), assign.clone(), labels.clone(), 0.0);
    let model = TopicModel::fit(&posts, 3, seed, exec).unwrap();

    let analytics = Analytics::new(
        Arc::new(Corpus::from_posts(posts.clone())),
        platform,
        Some(&partition),
        &registry,
        Some(&model),
        exec,
    );
    let mut rows: Vec<(LabelId, String)> = labels.iter().map(|&l| (l, registry.name(l))).collect();
    rows.sort();
    let world = World {
        platform,
        author_label: users.iter().zip(&assign).map(|(u, &c)| (u.clone(), labels[c])).collect(),
        communities: rows,
        post_topic: posts.iter().filter_map(|p| model.topic_of(&p.id).map(|t| (p.id.clone(), t))).collect(),
        topic_names: Some(model.labels.clone()),
        posts,
    };
    (analytics, world)
}

fn same_error(e: &socnet_core::Error, o: &OracleError) -> bool {
    use socnet_core::Error as E;
    matches!(
        (e, o),
        (E::UnknownCommunity(_), OracleError::UnknownCommunity)
            | (E::UnknownTopic(_), OracleError::UnknownTopic)
            | (E::NoTopicModel, OracleError::NoTopicModel)
            | (E::InvalidFilter(_), OracleError::Invalid)
    )
}

fn agree<T: PartialEq + std::fmt::Debug, U: PartialEq + std::fmt::Debug>(
    what: &str,
    got: Result<T, socnet_core::Error>,
    want: Result<U, OracleError>,
    eq: impl Fn(&T, &U) -> bool,
) -> Result<(), String> {
    match (&got, &want) {
        (Ok(g), Ok(w)) if eq(g, w) => Ok(()),
        (Err(e), Err(o)) if same_error(e, o) => Ok(()),
        _ => Err(format!("{what}: got {got:?}, oracle {want:?}")),
    }
}

/// Runs every aggregation for `f` on both sides; Err describes the first mismatch.
pub fn check_filter(a: &socnet_core::analytics::Analytics, w: &World, f: &FilterSpec, k: usize) -> Result<(), String> {
    let eq = |g: &AggregationResult, o: &AggregationResult| g == o;
    agree(
        "select",
        a.select(f),
        w.select(f),
        |g: &Vec<u32>, o: &Vec<usize>| g.iter().map(|&x| x as usize).eq(o.iter().copied()),
    )?;
    for g in [Granularity::Hour, Granularity::Day, Granularity::Week] {
        for split in [false, true] {
            agree("timeline", a.timeline(f, g, split), w.timeline(f, g, split), eq)?;
        }
    }
    for field in [Field::Language, Field::Sentiment] {
        agree("distribution", a.distribution(f, field), w.distribution(f, field), eq)?;
    }
    agree("geo", a.geo_distribution(f), w.geo(f), |g, o| match (g, o) {
        (AggregationResult::Categorical { counts }, Some(c)) => counts == c,
        (AggregationResult::CapabilityAbsent { .. }, None) => true,
        _ => false,
    })?;
    for kind in [ContentKind::Posts, ContentKind::Urls, ContentKind::Hashtags] {
        agree("top", a.top_content(f, kind, k), w.top(f, kind, k), eq)?;
    }
    agree("wordcloud", a.wordcloud_terms(f, k), w.wordcloud(f, k), eq)?;
    for mode in [MatrixMode::Counts, MatrixMode::Proportions] {
        agree("topics_per_community", a.topics_per_community(f, mode), w.cross_tab(f, mode), eq)?;
    }
    Ok(())
}
