//! YouTube comment threads whose reply edges are known by construction.
//!
//! Every comment is generated together with the edge it must produce: the
//! channel for a top-level comment, the first mention that names an earlier
//! replier of the same thread, or otherwise the top-level comment's author.
//! Lines are shuffled, so thread order must be recovered from timestamps.

use std::collections::{BTreeMap, BTreeSet};

use chrono::DateTime;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const USERS: usize = 60;
pub const CHANNELS: usize = 12;
const T0: i64 = 1_717_200_000;

pub struct ThreadCorpus {
    /// NDJSON ingestion file, shuffled.
    pub text: String,
    pub expected: BTreeMap<(String, String), u64>,
    /// Comments that must produce no edge: self-replies and missing parents.
    pub expected_skips: u64,
    /// Which rule produced each expected edge occurrence.
    pub rule_counts: [u64; 3],
}

fn user(i: usize) -> String {
    format!("u{i}")
}

fn handle(i: usize) -> String {
    format!("Viewer_{i}")
}

fn channel(i: usize) -> String {
    format!("ch{i}")
}

fn record(
    id: &str,
    author: &str,
    author_handle: Option<&str>,
    ts: i64,
    video: &str,
    channel: Option<&str>,
    parent: Option<&str>,
    mentions: &[String],
) -> String {
    let mut s = format!(
        r#"{{"id":"{id}","platform":"youtube","author_id":"{author}","text":"comment {id}","created_at":"{}","video_id":"{video}""#,
        DateTime::from_timestamp(ts, 0).unwrap().format("%Y-%m-%dT%H:%M:%SZ")
    );
    if let Some(c) = channel {
        s += &format!(r#","channel_id":"{c}""#);
    }
    if let Some(p) = parent {
        s += &format!(r#","parent_comment_id":"{p}""#);
    }
    if !mentions.is_empty() {
        let m: Vec<String> = mentions.iter().map(|m| format!("\"{m}\"")).collect();
        s += &format!(r#","mentions":[{}]"#, m.join(","));
    }
    if let Some(h) = author_handle {
        s += &format!(r#","author":{{"handle":"{h}"}}"#);
    }
    s + "}"
}

/// Mention token for user `i`, sometimes by handle, with varied case and `@`.
fn mention_of(i: usize, rng: &mut impl Rng) -> String {
    let base = if rng.random_bool(0.5) { user(i) } else { handle(i) };
    match rng.random_range(0..3) {
        0 => base,
        1 => format!("@{base}"),
        _ => format!("@{}", base.to_uppercase()),
    }
}

pub fn generate(threads: usize, seed: u64) -> ThreadCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    let mut expected: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut expected_skips = 0;
    let mut rule_counts = [0u64; 3];
    let mut edge = |a: String, b: String, rule: usize, skips: &mut u64| {
        if a == b {
            *skips += 1;
        } else {
            *expected.entry((a, b)).or_insert(0) += 1;
            rule_counts[rule] += 1;
        }
    };
    for t in 0..threads {
        let video = format!("v{t}");
        let ch_idx = t % CHANNELS;
        let ch = channel(ch_idx);
        let root_id = format!("t{t}");
        let base = T0 + t as i64 * 10_000;
        // channel owners occasionally comment on their own video
        let (root_author, root_handle) = if rng.random_bool(0.05) {
            (ch.clone(), None)
        } else {
            let i = rng.random_range(0..USERS);
            (user(i), Some(handle(i)))
        };
        lines.push(record(&root_id, &root_author, root_handle.as_deref(), base, &video, Some(&ch), None, &[]));
        edge(root_author.clone(), ch.clone(), 0, &mut expected_skips);

        let replies = rng.random_range(0..10);
        let mut earlier: Vec<usize> = Vec::new();
        for r in 0..replies {
            let author_idx = rng.random_range(0..USERS);
            let author = user(author_idx);
            let ts = base + 60 * (r as i64 + 1);
            let id = format!("t{t}r{r}");
            let candidates: Vec<usize> = earlier.iter().copied().filter(|&e| e != author_idx).collect();
            let later_only: Vec<usize> = (0..USERS).filter(|u| !earlier.contains(u)).collect();
            let (mentions, target, rule) = match rng.random_range(0..6) {
                // rule (b): no mentions
                0 => (vec![], root_author.clone(), 1),
                // rule (c): one earlier replier
                1 if !candidates.is_empty() => {
                    let m = *candidates.choose(&mut rng).unwrap();
                    (vec![mention_of(m, &mut rng)], user(m), 2)
                }
                // rule (c): first matching mention wins; non-repliers are skipped
                2 if candidates.len() >= 2 => {
                    let mut two: Vec<usize> = candidates.choose_multiple(&mut rng, 2).copied().collect();
                    two.shuffle(&mut rng);
                    let stranger = *later_only.choose(&mut rng).unwrap();
                    let ms = vec![mention_of(stranger, &mut rng), mention_of(two[0], &mut rng), mention_of(two[1], &mut rng)];
                    (ms, user(two[0]), 2)
                }
                // only users who have not replied yet: falls back to rule (b)
                3 => {
                    let stranger = *later_only.choose(&mut rng).unwrap();
                    (vec![mention_of(stranger, &mut rng), "@nobody_at_all".to_string()], root_author.clone(), 1)
                }
                // mentioning oneself does not address anyone
                4 if earlier.contains(&author_idx) => (vec![mention_of(author_idx, &mut rng)], root_author.clone(), 1),
                _ => (vec![], root_author.clone(), 1),
            };
            lines.push(record(&id, &author, Some(&handle(author_idx)), ts, &video, None, Some(&root_id), &mentions));
            edge(author, target, rule, &mut expected_skips);
            if !earlier.contains(&author_idx) {
                earlier.push(author_idx);
            }
        }
        // a reply whose top-level comment was never collected
        if rng.random_bool(0.1) {
            let i = rng.random_range(0..USERS);
            lines.push(record(
                &format!("t{t}x"),
                &user(i),
                Some(&handle(i)),
                base + 5_000,
                &video,
                None,
                Some(&format!("missing{t}")),
                &[],
            ));
            expected_skips += 1;
        }
    }
    lines.shuffle(&mut rng);
    let mut text = lines.join("\n");
    text.push('\n');
    ThreadCorpus {
        text,
        expected,
        expected_skips,
        rule_counts,
    }
}

/// Distinct users named in the corpus, for sanity checks.
pub fn authors(corpus: &ThreadCorpus) -> BTreeSet<String> {
    corpus.expected.keys().flat_map(|(a, b)| [a.clone(), b.clone()]).collect()
}
