//! Weighted directed interaction graph: retweets on Twitter, reply
//! attributions on YouTube.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Platform, Post, UserId, UserRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Retweet,
    Reply,
}

impl EdgeKind {
    pub fn for_platform(platform: Platform) -> Self {
        match platform {
            Platform::Twitter => EdgeKind::Retweet,
            Platform::Youtube => EdgeKind::Reply,
        }
    }
}

/// Interaction posts that produced no edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipTally {
    /// Retweet or reply target not found in the corpus.
    pub dangling: u64,
    /// Interaction with oneself.
    pub self_loops: u64,
    /// Top-level comment without a channel id.
    pub missing_channel: u64,
}

impl SkipTally {
    pub fn total(&self) -> u64 {
        self.dangling + self.self_loops + self.missing_channel
    }

    fn add(&mut self, other: &SkipTally) {
        self.dangling += other.dangling;
        self.self_loops += other.self_loops;
        self.missing_channel += other.missing_channel;
    }
}

/// Edge multiset produced from one batch of posts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    pub kind: EdgeKind,
    /// (actor, target) → multiplicity.
    pub weights: BTreeMap<(UserId, UserId), u64>,
    pub skipped: SkipTally,
    /// Number of posts that were interactions (retweets, comments, replies).
    pub interactions: u64,
}

impl EdgeSet {
    pub fn new(kind: EdgeKind) -> Self {
        EdgeSet {
            kind,
            weights: BTreeMap::new(),
            skipped: SkipTally::default(),
            interactions: 0,
        }
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.values().sum()
    }

    pub fn add(&mut self, src: &str, dst: &str) {
        if src == dst {
            self.skipped.self_loops += 1;
        } else {
            *self
                .weights
                .entry((src.to_string(), dst.to_string()))
                .or_insert(0) += 1;
        }
    }

    pub fn extend(&mut self, other: &EdgeSet) {
        for (k, w) in &other.weights {
            *self.weights.entry(k.clone()).or_insert(0) += w;
        }
        self.skipped.add(&other.skipped);
        self.interactions += other.interactions;
    }
}

/// Lookup structures over every post known to the dataset, used to resolve
/// retweet targets and YouTube reply threads across batches.
pub struct InteractionContext<'a> {
    by_id: HashMap<&'a str, &'a Post>,
    /// Thread root id → replies sorted by (created_at, id).
    threads: HashMap<&'a str, Vec<&'a Post>>,
}

const MAX_PARENT_DEPTH: usize = 64;

impl<'a> InteractionContext<'a> {
    pub fn new<I: IntoIterator<Item = &'a Post>>(posts: I) -> Self {
        let mut by_id = HashMap::new();
        let mut replies = Vec::new();
        for p in posts {
            by_id.insert(p.id.as_str(), p);
            if p.is_reply() {
                replies.push(p);
            }
        }
        let mut ctx = InteractionContext {
            by_id,
            threads: HashMap::new(),
        };
        for r in replies {
            if let Some(root) = ctx.thread_root(r) {
                ctx.threads.entry(root.id.as_str()).or_default().push(r);
            }
        }
        for thread in ctx.threads.values_mut() {
            thread.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        }
        ctx
    }

    pub fn post(&self, id: &str) -> Option<&'a Post> {
        self.by_id.get(id).copied()
    }

    /// Top-level comment that heads the reply's thread. YouTube has no
    /// chained replies, but a reply-to-reply in the data is followed up to
    /// its root.
    pub fn thread_root(&self, reply: &Post) -> Option<&'a Post> {
        let mut cur = reply.parent_comment_id.as_deref()?;
        for _ in 0..MAX_PARENT_DEPTH {
            let parent = self.post(cur)?;
            match parent.parent_comment_id.as_deref() {
                None => return Some(parent),
                Some(next) => cur = next,
            }
        }
        None
    }

    fn thread(&self, root_id: &str) -> &[&'a Post] {
        self.threads.get(root_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Retweet edges: retweeter → original author.
pub fn build_twitter_edges(posts: &[Post], ctx: &InteractionContext<'_>) -> EdgeSet {
    let mut out = EdgeSet::new(EdgeKind::Retweet);
    for p in posts {
        let Some(orig) = p.retweet_of.as_deref() else {
            continue;
        };
        out.interactions += 1;
        match ctx.post(orig) {
            Some(original) => out.add(&p.author_id, &original.author_id),
            None => out.skipped.dangling += 1,
        }
    }
    out
}

/// Reply edges for YouTube comments:
///
/// * a top-level comment is a reply to the video's channel;
/// * a reply that mentions an earlier replier of the same thread is a reply
///   to the first such replier in mention order;
/// * any other reply is a reply to the author of the top-level comment.
pub fn build_youtube_edges(
    posts: &[Post],
    ctx: &InteractionContext<'_>,
    users: &UserRegistry,
) -> EdgeSet {
    let mut out = EdgeSet::new(EdgeKind::Reply);
    let mut replier_keys: HashMap<&str, HashMap<String, (usize, &str)>> = HashMap::new();
    for p in posts {
        out.interactions += 1;
        if !p.is_reply() {
            match p.channel_id.as_deref() {
                Some(channel) => out.add(&p.author_id, channel),
                None => out.skipped.missing_channel += 1,
            }
            continue;
        }
        let Some(root) = ctx.thread_root(p) else {
            out.skipped.dangling += 1;
            continue;
        };
        let thread = ctx.thread(&root.id);
        let position = thread
            .binary_search_by(|r| (r.created_at, &r.id).cmp(&(p.created_at, &p.id)))
            .unwrap_or_else(|i| i);
        let keys = replier_keys
            .entry(root.id.as_str())
            .or_insert_with(|| earliest_repliers(thread, users));
        let target = p
            .mentions
            .iter()
            .filter_map(|m| keys.get(m.as_str()))
            .find(|(idx, user)| *idx < position && *user != p.author_id)
            .map(|(_, user)| *user)
            .unwrap_or(root.author_id.as_str());
        out.add(&p.author_id, target);
    }
    out
}

/// Lowercase id/handle of every replier in a thread → (first reply position, user id).
fn earliest_repliers<'a>(
    thread: &[&'a Post],
    users: &UserRegistry,
) -> HashMap<String, (usize, &'a str)> {
    let mut keys = HashMap::new();
    for (i, r) in thread.iter().enumerate() {
        let id = r.author_id.as_str();
        keys.entry(id.to_lowercase()).or_insert((i, id));
        if let Some(u) = users.get(id) {
            keys.entry(u.handle.to_lowercase()).or_insert((i, id));
        }
    }
    keys
}

/// Builds the edge multiset for `posts`, resolving references against `ctx`.
pub fn build_edges(
    platform: Platform,
    posts: &[Post],
    ctx: &InteractionContext<'_>,
    users: &UserRegistry,
) -> EdgeSet {
    match platform {
        Platform::Twitter => build_twitter_edges(posts, ctx),
        Platform::Youtube => build_youtube_edges(posts, ctx, users),
    }
}

/// Cumulative interaction graph. Node indices are dense and follow first
/// insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionGraph {
    kind: Option<EdgeKind>,
    ids: Vec<UserId>,
    index: HashMap<UserId, u32>,
    edges: BTreeMap<(u32, u32), u64>,
    degree: Vec<u64>,
}

impl InteractionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn kind(&self) -> Option<EdgeKind> {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[UserId] {
        &self.ids
    }

    pub fn id(&self, node: usize) -> &str {
        &self.ids[node]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| i as usize)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn weight(&self, src: &str, dst: &str) -> u64 {
        match (self.index.get(src), self.index.get(dst)) {
            (Some(&s), Some(&d)) => self.edges.get(&(s, d)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Weighted degree (in + out) of a node.
    pub fn degree(&self, node: usize) -> u64 {
        self.degree[node]
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degree
    }

    /// Sum of all edge weights.
    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Directed edges as (src index, dst index, weight), sorted by index pair.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.edges
            .iter()
            .map(|(&(s, d), &w)| (s as usize, d as usize, w))
    }

    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        self.degree.push(0);
        i
    }

    /// Adds a single directed edge weight. Self-loops and zero weights are ignored.
    pub fn add_edge(&mut self, src: &str, dst: &str, weight: u64) {
        if src == dst || weight == 0 {
            return;
        }
        let s = self.intern(src);
        let d = self.intern(dst);
        *self.edges.entry((s, d)).or_insert(0) += weight;
        self.degree[s as usize] += weight;
        self.degree[d as usize] += weight;
    }

    /// Sums a batch's edge weights into the graph. Fails without modifying the
    /// graph if the batch kind differs from the graph's.
    pub fn merge_batch(&mut self, batch: &EdgeSet) -> Result<()> {
        match self.kind {
            Some(kind) if kind != batch.kind => {
                return Err(Error::KindMismatch {
                    graph: kind,
                    batch: batch.kind,
                })
            }
            _ => {}
        }
        self.kind = Some(batch.kind);
        for ((src, dst), &w) in &batch.weights {
            self.add_edge(src, dst, w);
        }
        Ok(())
    }

    /// Undirected view with both directions' weights summed, in CSR form.
    pub fn undirected(&self) -> Undirected {
        let n = self.node_count();
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut pair: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (&(s, d), &w) in &self.edges {
            let key = if s < d { (s, d) } else { (d, s) };
            *pair.entry(key).or_insert(0) += w;
        }
        for (&(a, b), &w) in &pair {
            adj[a as usize].push((b, w as f64));
            adj[b as usize].push((a, w as f64));
        }
        Undirected::from_adjacency(adj)
    }

    /// Edge-list text table: one `src dst weight` line per edge.
    pub fn edge_table(&self) -> String {
        let mut out = String::new();
        for (s, d, w) in self.edges() {
            let _ = writeln!(
                out,
                "{} {} {}",
                escape_field(&self.ids[s]),
                escape_field(&self.ids[d]),
                w
            );
        }
        out
    }

    /// Node text table: one `user_id degree` line per node, in index order.
    pub fn node_table(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            let _ = writeln!(out, "{} {}", escape_field(id), self.degree[i]);
        }
        out
    }

    /// Rebuilds a graph from its node and edge tables.
    pub fn from_tables(kind: Option<EdgeKind>, nodes: &str, edges: &str) -> Result<Self, String> {
        let mut g = InteractionGraph {
            kind,
            ..Default::default()
        };
        for (n, line) in nodes.lines().enumerate() {
            let mut parts = line.split(' ');
            let id = parts.next().ok_or_else(|| format!("node line {}: empty", n + 1))?;
            g.intern(&unescape_field(id)?);
        }
        for (n, line) in edges.lines().enumerate() {
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(format!("edge line {}: expected 3 fields", n + 1));
            }
            let w: u64 = parts[2]
                .parse()
                .map_err(|e| format!("edge line {}: {e}", n + 1))?;
            let src = unescape_field(parts[0])?;
            let dst = unescape_field(parts[1])?;
            if !g.index.contains_key(&src) || !g.index.contains_key(&dst) {
                return Err(format!("edge line {}: unknown endpoint", n + 1));
            }
            g.add_edge(&src, &dst, w);
        }
        Ok(g)
    }
}

/// Symmetric weighted adjacency in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct Undirected {
    pub offsets: Vec<usize>,
    pub neighbors: Vec<u32>,
    pub weights: Vec<f64>,
}

impl Undirected {
    /// Neighbor lists may be in any order; they are sorted by neighbor index.
    pub fn from_adjacency(mut adj: Vec<Vec<(u32, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let total = adj.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for list in adj.iter_mut() {
            list.sort_by_key(|&(v, _)| v);
            for &(v, w) in list.iter() {
                neighbors.push(v);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Undirected {
            offsets,
            neighbors,
            weights,
        }
    }

    /// Builds from an undirected edge list; parallel edges are summed.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut pair: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(a, b, w) in edges {
            if a == b {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            *pair.entry(key).or_insert(0.0) += w;
        }
        let mut adj = vec![Vec::new(); n];
        for (&(a, b), &w) in &pair {
            adj[a].push((b as u32, w));
            adj[b].push((a as u32, w));
        }
        Self::from_adjacency(adj)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&v, &w)| (v as usize, w))
    }

    /// Weighted degree.
    pub fn strength(&self, u: usize) -> f64 {
        self.weights[self.offsets[u]..self.offsets[u + 1]].iter().sum()
    }

    /// Total edge weight `m` (each undirected edge counted once).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / 2.0
    }
}

/// Percent-escapes the characters that would break whitespace-separated tables.
pub fn escape_field(s: &str) -> String {
    if !s.contains([' ', '\t', '\n', '\r', '%']) && !s.is_empty() {
        return s.to_string();
    }
    if s.is_empty() {
        return "%00".to_string();
    }
    let mut out = String::with_capacity(s.len() + 4);
    for c in s.chars() {
        match c {
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            '%' => out.push_str("%25"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> Result<String, String> {
    if s == "%00" {
        return Ok(String::new());
    }
    if !s.contains('%') {
        return Ok(s.to_string());
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest
            .get(pos + 1..pos + 3)
            .ok_or_else(|| format!("truncated escape in `{s}`"))?;
        out.push(match code {
            "20" => ' ',
            "09" => '\t',
            "0A" => '\n',
            "0D" => '\r',
            "25" => '%',
            _ => return Err(format!("bad escape `%{code}` in `{s}`")),
        });
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_timestamp;
    use std::collections::BTreeSet;

    fn tweet(id: &str, author: &str, rt: Option<&str>) -> Post {
        let mut p = Post::new(
            id,
            Platform::Twitter,
            author,
            "",
            parse_timestamp("2022-11-20T10:00:00Z").unwrap(),
        );
        p.retweet_of = rt.map(str::to_string);
        p
    }

    fn comment(id: &str, author: &str, parent: Option<&str>, t: i64, mentions: &[&str]) -> Post {
        let mut p = Post::new(
            id,
            Platform::Youtube,
            author,
            "",
            chrono::DateTime::from_timestamp(1_700_000_000 + t, 0).unwrap(),
        );
        p.video_id = Some("vid".into());
        p.channel_id = Some("X".into());
        p.parent_comment_id = parent.map(str::to_string);
        p.mentions = mentions.iter().map(|m| m.to_string()).collect();
        p
    }

    fn twitter(posts: &[Post]) -> EdgeSet {
        build_twitter_edges(posts, &InteractionContext::new(posts))
    }

    fn youtube(posts: &[Post]) -> EdgeSet {
        build_youtube_edges(posts, &InteractionContext::new(posts), &UserRegistry::new())
    }

    fn key(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn retweet_edges() {
        let posts = vec![tweet("1", "A", None), tweet("2", "B", Some("1"))];
        let e = twitter(&posts);
        assert_eq!(e.weights.get(&key("B", "A")), Some(&1));

        let posts = vec![
            tweet("1", "A", None),
            tweet("2", "B", Some("1")),
            tweet("3", "B", Some("1")),
        ];
        assert_eq!(twitter(&posts).weights.get(&key("B", "A")), Some(&2));
    }

    #[test]
    fn dangling_retweet_tallied_against_author_scan() {
        let posts = vec![
            tweet("1", "A", None),
            tweet("2", "B", Some("404")),
            tweet("3", "C", Some("1")),
            tweet("4", "A", Some("1")),
        ];
        let e = twitter(&posts);
        // oracle: retweets whose target id is not a corpus post id
        let ids: BTreeSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
        let expected_dangling = posts
            .iter()
            .filter_map(|p| p.retweet_of.as_deref())
            .filter(|t| !ids.contains(t))
            .count() as u64;
        assert_eq!(e.skipped.dangling, expected_dangling);
        assert_eq!(e.skipped.self_loops, 1);
        assert!(e.weights.get(&key("B", "A")).is_none());
        assert_eq!(e.total_weight() + e.skipped.total(), e.interactions);
    }

    #[test]
    fn youtube_reply_rules() {
        let posts = vec![
            comment("C1", "u1", None, 0, &[]),
            comment("R1", "uR1", Some("C1"), 10, &[]),
            comment("R2", "uR2", Some("C1"), 20, &["ur1"]),
        ];
        let e = youtube(&posts);
        assert_eq!(e.weights.get(&key("u1", "X")), Some(&1));
        assert_eq!(e.weights.get(&key("uR1", "u1")), Some(&1));
        assert_eq!(e.weights.get(&key("uR2", "uR1")), Some(&1));
        assert_eq!(e.total_weight(), 3);
    }

    #[test]
    fn youtube_first_matching_mention_wins_and_later_repliers_ignored() {
        let posts = vec![
            comment("C1", "u1", None, 0, &[]),
            comment("R1", "a", Some("C1"), 10, &[]),
            comment("R2", "b", Some("C1"), 20, &[]),
            // "zed" replies later, so mentioning them falls through; "b" precedes "a"
            comment("R3", "c", Some("C1"), 30, &["zed", "b", "a"]),
            comment("R4", "zed", Some("C1"), 40, &[]),
            // mentions top-level author only → rule b
            comment("R5", "d", Some("C1"), 50, &["u1"]),
        ];
        let e = youtube(&posts);
        assert_eq!(e.weights.get(&key("c", "b")), Some(&1));
        assert_eq!(e.weights.get(&key("d", "u1")), Some(&1));
        assert_eq!(e.weights.get(&key("zed", "u1")), Some(&1));
    }

    #[test]
    fn youtube_thread_order_uses_timestamps_not_input_order() {
        let mut posts = vec![
            comment("C1", "u1", None, 0, &[]),
            comment("R2", "b", Some("C1"), 20, &["a"]),
            comment("R1", "a", Some("C1"), 10, &[]),
        ];
        let e1 = youtube(&posts);
        posts.reverse();
        let e2 = youtube(&posts);
        assert_eq!(e1, e2);
        assert_eq!(e1.weights.get(&key("b", "a")), Some(&1));
    }

    #[test]
    fn youtube_mentions_resolve_by_handle() {
        let posts = vec![
            comment("C1", "u1", None, 0, &[]),
            comment("R1", "UCabc", Some("C1"), 10, &[]),
            comment("R2", "UCdef", Some("C1"), 20, &["climatefan"]),
        ];
        let mut users = UserRegistry::new();
        users.upsert(crate::model::User {
            id: "UCabc".into(),
            handle: "ClimateFan".into(),
            display_name: String::new(),
            description: String::new(),
            platform: Platform::Youtube,
        });
        let e = build_youtube_edges(&posts, &InteractionContext::new(&posts), &users);
        assert_eq!(e.weights.get(&key("UCdef", "UCabc")), Some(&1));
    }

    #[test]
    fn youtube_skips() {
        let mut orphan = comment("R9", "u9", Some("missing"), 5, &[]);
        orphan.channel_id = None;
        let mut no_channel = comment("C2", "u2", None, 0, &[]);
        no_channel.channel_id = None;
        let posts = vec![orphan, no_channel, comment("C3", "X", None, 0, &[])];
        let e = youtube(&posts);
        assert_eq!(e.skipped.dangling, 1);
        assert_eq!(e.skipped.missing_channel, 1);
        assert_eq!(e.skipped.self_loops, 1);
        assert_eq!(e.total_weight() + e.skipped.total(), e.interactions);
    }

    #[test]
    fn merge_rules() {
        let mut g = InteractionGraph::new();
        let mut e = EdgeSet::new(EdgeKind::Retweet);
        e.add("B", "A");
        g.merge_batch(&e).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);

        let mut g = InteractionGraph::new();
        let mut e1 = EdgeSet::new(EdgeKind::Retweet);
        e1.weights.insert(key("B", "A"), 2);
        let mut e2 = EdgeSet::new(EdgeKind::Retweet);
        e2.weights.insert(key("B", "A"), 3);
        g.merge_batch(&e1).unwrap();
        g.merge_batch(&e2).unwrap();
        assert_eq!(g.weight("B", "A"), 5);
        assert_eq!(g.degree(g.node_index("A").unwrap()), 5);

        let reply = EdgeSet::new(EdgeKind::Reply);
        let before = g.clone();
        assert!(matches!(
            g.merge_batch(&reply),
            Err(Error::KindMismatch { .. })
        ));
        assert_eq!(g, before);
    }

    #[test]
    fn merge_disjoint_node_count_is_union() {
        let mut e1 = EdgeSet::new(EdgeKind::Retweet);
        e1.add("a", "b");
        e1.add("c", "b");
        let mut e2 = EdgeSet::new(EdgeKind::Retweet);
        e2.add("d", "e");
        e2.add("b", "e");
        let mut g = InteractionGraph::new();
        g.merge_batch(&e1).unwrap();
        g.merge_batch(&e2).unwrap();
        let union: BTreeSet<&str> = e1
            .weights
            .keys()
            .chain(e2.weights.keys())
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect();
        assert_eq!(g.node_count(), union.len());
    }

    #[test]
    fn tables_round_trip_with_escapes() {
        let mut g = InteractionGraph::new();
        g.add_edge("a b", "c%d", 3);
        g.add_edge("c%d", "e", 1);
        let back = InteractionGraph::from_tables(None, &g.node_table(), &g.edge_table()).unwrap();
        assert_eq!(back, g);
        assert!(g.edge_table().starts_with("a%20b c%25d 3\n"));
    }

    #[test]
    fn undirected_sums_both_directions() {
        let mut g = InteractionGraph::new();
        g.add_edge("a", "b", 2);
        g.add_edge("b", "a", 3);
        let u = g.undirected();
        assert_eq!(u.neighbors(0).collect::<Vec<_>>(), vec![(1, 5.0)]);
        assert_eq!(u.total_weight(), 5.0);
        assert_eq!(u.strength(1), g.degree(1) as f64);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_corpus() -> impl Strategy<Value = Vec<Post>> {
            // threads of top-level comments + replies with random mentions
            proptest::collection::vec(
                (0usize..6, proptest::option::of(0usize..8), 0i64..50, proptest::collection::vec(0usize..6, 0..3)),
                1..40,
            )
            .prop_map(|specs| {
                specs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (author, parent, t, mentions))| {
                        let parent = parent.filter(|&p| p < i).map(|p| format!("p{p}"));
                        let m: Vec<String> = mentions.iter().map(|m| format!("u{m}")).collect();
                        let mrefs: Vec<&str> = m.iter().map(String::as_str).collect();
                        comment(&format!("p{i}"), &format!("u{author}"), parent.as_deref(), t, &mrefs)
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn permutation_invariant_and_conserving(posts in arb_corpus(), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let e1 = youtube(&posts);
                let mut shuffled = posts.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let e2 = youtube(&shuffled);
                prop_assert_eq!(&e1, &e2);
                prop_assert_eq!(e1.total_weight() + e1.skipped.total(), e1.interactions);
                prop_assert_eq!(e1.interactions, posts.len() as u64);
            }

            #[test]
            fn merges_never_decrease_weights(batches in proptest::collection::vec(proptest::collection::vec((0u8..5, 0u8..5), 0..10), 1..5)) {
                let mut g = InteractionGraph::new();
                let mut prev: BTreeMap<(String, String), u64> = BTreeMap::new();
                for b in batches {
                    let mut e = EdgeSet::new(EdgeKind::Retweet);
                    for (s, d) in b {
                        e.add(&s.to_string(), &d.to_string());
                    }
                    g.merge_batch(&e).unwrap();
                    for ((s, d), w) in &prev {
                        prop_assert!(g.weight(s, d) >= *w);
                    }
                    prev = g.edges().map(|(s, d, w)| ((g.id(s).to_string(), g.id(d).to_string()), w)).collect();
                    for u in 0..g.node_count() {
                        let deg: u64 = g.edges().filter(|&(s, d, _)| s == u || d == u).map(|(_, _, w)| w).sum();
                        prop_assert_eq!(deg, g.degree(u));
                    }
                }
            }
        }
    }
}
