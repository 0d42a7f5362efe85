//! Domain types and the line-delimited ingestion record format.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

pub type PostId = String;
pub type UserId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Twitter,
    Youtube,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Twitter => "twitter",
            Platform::Youtube => "youtube",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "twitter" | "x" => Ok(Platform::Twitter),
            "youtube" => Ok(Platform::Youtube),
            other => Err(format!("unknown platform `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
    #[default]
    Unknown,
}

impl Sentiment {
    pub const ALL: [Sentiment; 4] = [
        Sentiment::Positive,
        Sentiment::Negative,
        Sentiment::Neutral,
        Sentiment::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Unknown => "unknown",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" => Ok(Sentiment::Positive),
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            "unknown" => Ok(Sentiment::Unknown),
            other => Err(format!("unknown sentiment `{other}`")),
        }
    }
}

/// One tweet or YouTube comment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Post {
    pub id: PostId,
    pub platform: Platform,
    pub author_id: UserId,
    pub text: String,
    #[serde(serialize_with = "ser_timestamp")]
    pub created_at: DateTime<Utc>,
    pub language: String,
    pub sentiment: Sentiment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retweet_of: Option<PostId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_id: Option<UserId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_comment_id: Option<PostId>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hashtags: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub urls: Vec<String>,
    pub engagement: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

impl Post {
    /// Minimal post with every optional field absent.
    pub fn new(
        id: impl Into<String>,
        platform: Platform,
        author_id: impl Into<String>,
        text: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        Post {
            id: id.into(),
            platform,
            author_id: author_id.into(),
            text: text.into(),
            created_at,
            language: "und".to_string(),
            sentiment: Sentiment::Unknown,
            retweet_of: None,
            video_id: None,
            channel_id: None,
            parent_comment_id: None,
            mentions: Vec::new(),
            hashtags: Vec::new(),
            urls: Vec::new(),
            engagement: 0,
            country: None,
            embedding: None,
        }
    }

    /// YouTube reply (as opposed to a top-level comment on the video).
    pub fn is_reply(&self) -> bool {
        self.platform == Platform::Youtube && self.parent_comment_id.is_some()
    }

    /// Serializes to one ingestion record (no trailing newline).
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("post serialization is infallible")
    }
}

fn ser_timestamp<S: serde::Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_timestamp(ts))
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an RFC-3339 timestamp into UTC at second resolution.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    let ts = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp `{s}`: {e}"))?;
    if ts.timestamp_subsec_nanos() != 0 {
        return Err(format!("timestamp `{s}` has sub-second precision"));
    }
    Ok(ts.with_timezone(&Utc))
}

/// A user or channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub handle: String,
    pub display_name: String,
    pub description: String,
    pub platform: Platform,
}

impl User {
    pub fn bare(id: &str, platform: Platform) -> Self {
        User {
            id: id.to_string(),
            handle: id.to_string(),
            display_name: String::new(),
            description: String::new(),
            platform,
        }
    }
}

/// One ingested batch as recorded in the journal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: u64,
    pub source_path: String,
    pub post_count: u64,
    #[serde(with = "timestamp_serde")]
    pub ingested_at: DateTime<Utc>,
}

pub(crate) mod timestamp_serde {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_timestamp(&raw).map_err(serde::de::Error::custom)
    }
}

/// Inclusive time window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    #[serde(with = "timestamp_serde")]
    pub start: DateTime<Utc>,
    #[serde(with = "timestamp_serde")]
    pub end: DateTime<Utc>,
}

/// Conjunctive post filter. Absent fields match everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_range: Option<DateRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Sentiment>,
    /// Community label id, resolved through the current partition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<usize>,
}

impl FilterSpec {
    pub fn is_empty(&self) -> bool {
        *self == FilterSpec::default()
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawAuthor {
    #[serde(default)]
    handle: Option<String>,
    #[serde(default)]
    display_name: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    platform: String,
    author_id: String,
    text: String,
    created_at: String,
    #[serde(default)]
    language: Option<String>,
    #[serde(default)]
    sentiment: Option<String>,
    #[serde(default)]
    retweet_of: Option<String>,
    #[serde(default)]
    video_id: Option<String>,
    #[serde(default)]
    channel_id: Option<String>,
    #[serde(default)]
    parent_comment_id: Option<String>,
    #[serde(default)]
    mentions: Vec<String>,
    #[serde(default)]
    hashtags: Vec<String>,
    #[serde(default)]
    urls: Vec<String>,
    #[serde(default)]
    engagement: Option<u64>,
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    embedding: Option<Vec<f32>>,
    #[serde(default)]
    author: Option<RawAuthor>,
}

/// Lowercases a mention and strips its leading `@`.
pub fn normalize_mention(raw: &str) -> String {
    raw.trim().trim_start_matches('@').to_lowercase()
}

fn valid_language(code: &str) -> bool {
    code == "und" || (code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase()))
}

/// Parses one ingestion record into a validated [`Post`].
pub fn parse_record(line: &[u8]) -> Result<Post, String> {
    parse_record_with_author(line).map(|(post, _)| post)
}

/// Like [`parse_record`], also returning the optional author profile.
pub fn parse_record_with_author(line: &[u8]) -> Result<(Post, Option<User>), String> {
    let line = std::str::from_utf8(line).map_err(|e| format!("invalid UTF-8: {e}"))?;
    let line = line.trim();
    if line.is_empty() {
        return Err("empty record".to_string());
    }
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.id.is_empty() {
        return Err("empty `id`".to_string());
    }
    if raw.author_id.is_empty() {
        return Err("empty `author_id`".to_string());
    }
    let platform: Platform = raw.platform.parse()?;
    let created_at = parse_timestamp(&raw.created_at)?;
    let language = match raw.language {
        None => "und".to_string(),
        Some(l) => {
            let l = l.to_ascii_lowercase();
            if !valid_language(&l) {
                return Err(format!("invalid language code `{l}`"));
            }
            l
        }
    };
    let sentiment = match raw.sentiment {
        None => Sentiment::Unknown,
        Some(s) => s.parse()?,
    };
    let non_empty = |o: Option<String>| o.filter(|s| !s.is_empty());
    let retweet_of = non_empty(raw.retweet_of);
    let video_id = non_empty(raw.video_id);
    let channel_id = non_empty(raw.channel_id);
    let parent_comment_id = non_empty(raw.parent_comment_id);
    let country = non_empty(raw.country);
    match platform {
        Platform::Youtube => {
            if country.is_some() {
                return Err("geolocation not supported for youtube".to_string());
            }
            if retweet_of.is_some() {
                return Err("`retweet_of` not allowed on youtube records".to_string());
            }
        }
        Platform::Twitter => {
            if video_id.is_some() || parent_comment_id.is_some() || channel_id.is_some() {
                return Err(
                    "`video_id`/`channel_id`/`parent_comment_id` not allowed on twitter records"
                        .to_string(),
                );
            }
        }
    }
    let country = match country {
        None => None,
        Some(c) => {
            let c = c.to_ascii_uppercase();
            if c.len() != 2 || !c.bytes().all(|b| b.is_ascii_uppercase()) {
                return Err(format!("invalid country code `{c}`"));
            }
            Some(c)
        }
    };
    if let Some(e) = &raw.embedding {
        if e.is_empty() {
            return Err("empty embedding".to_string());
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err("non-finite embedding component".to_string());
        }
    }
    let mentions = raw
        .mentions
        .iter()
        .map(|m| normalize_mention(m))
        .filter(|m| !m.is_empty())
        .collect();
    let author = raw.author.map(|a| User {
        id: raw.author_id.clone(),
        handle: a.handle.unwrap_or_else(|| raw.author_id.clone()),
        display_name: a.display_name.unwrap_or_default(),
        description: a.description.unwrap_or_default(),
        platform,
    });
    let post = Post {
        id: raw.id,
        platform,
        author_id: raw.author_id,
        text: raw.text,
        created_at,
        language,
        sentiment,
        retweet_of,
        video_id,
        channel_id,
        parent_comment_id,
        mentions,
        hashtags: raw.hashtags,
        urls: raw.urls,
        engagement: raw.engagement.unwrap_or(0),
        country,
        embedding: raw.embedding,
    };
    Ok((post, author))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
}

/// Result of parsing a whole ingestion file.
#[derive(Clone, Debug, Default)]
pub struct ParsedBatch {
    pub posts: Vec<Post>,
    /// Author profile carried by each accepted record, aligned with `posts`.
    pub authors: Vec<Option<User>>,
    /// 1-based source line of each accepted record, aligned with `posts`.
    pub post_lines: Vec<u64>,
    pub rejects: Vec<Reject>,
    pub line_count: u64,
}

impl ParsedBatch {
    pub fn accepted(&self) -> u64 {
        self.posts.len() as u64
    }

    pub(crate) fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rejects.push(Reject {
            line,
            reason: reason.into(),
        });
    }
}

/// Parses a line-delimited ingestion stream. Malformed lines are tallied in
/// `rejects`; `accepted + rejects == line_count` always holds.
pub fn parse_batch<R: BufRead>(reader: R) -> std::io::Result<ParsedBatch> {
    let mut out = ParsedBatch::default();
    for (i, line) in reader.split(b'\n').enumerate() {
        let mut line = line?;
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        let n = i as u64 + 1;
        out.line_count = n;
        match parse_record_with_author(&line) {
            Ok((post, author)) => {
                out.authors.push(author);
                out.post_lines.push(n);
                out.posts.push(post);
            }
            Err(reason) => out.reject(n, reason),
        }
    }
    Ok(out)
}

/// Known users and channels, keyed by id, with a lowercase handle lookup.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UserRegistry {
    users: std::collections::BTreeMap<UserId, User>,
    by_handle: std::collections::HashMap<String, UserId>,
}

impl UserRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a bare user if unknown.
    pub fn ensure(&mut self, id: &str, platform: Platform) {
        if !self.users.contains_key(id) {
            self.upsert(User::bare(id, platform));
        }
    }

    /// Inserts or replaces a user profile.
    pub fn upsert(&mut self, user: User) {
        if let Some(old) = self.users.get(&user.id) {
            let key = old.handle.to_lowercase();
            if self.by_handle.get(&key) == Some(&old.id) {
                self.by_handle.remove(&key);
            }
        }
        // the smallest id wins a shared handle, independent of insertion order
        self.by_handle
            .entry(user.handle.to_lowercase())
            .and_modify(|v| {
                if user.id < *v {
                    *v = user.id.clone();
                }
            })
            .or_insert_with(|| user.id.clone());
        self.users.insert(user.id.clone(), user);
    }

    pub fn get(&self, id: &str) -> Option<&User> {
        self.users.get(id)
    }

    /// Resolves a normalized mention to a user id by id or handle.
    pub fn resolve_mention(&self, mention: &str) -> Option<&str> {
        self.by_handle.get(mention).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }
}
