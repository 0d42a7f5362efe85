mod support;

use std::collections::BTreeMap;

use socnet_core::config::Config;
use socnet_core::engine::{Engine, LabelKind, RunOptions};
use socnet_core::store::{CrashPoint, Operation, Store};
use socnet_core::{Error, Platform, Post};
use support::batches::{groups, twitter_batch};

fn engine(dir: &std::path::Path) -> Engine {
    let mut cfg = Config::default();
    cfg.data_root = dir.to_path_buf();
    cfg.layout.iterations = 60;
    Engine::open(cfg).unwrap()
}

fn opts(seed: u64) -> RunOptions {
    RunOptions {
        seed: Some(seed),
        ..Default::default()
    }
}

/// Retweet edge weights recomputed directly from the posts.
fn retweet_oracle(posts: &[Post]) -> BTreeMap<(String, String), u64> {
    let author: BTreeMap<&str, &str> = posts.iter().map(|p| (p.id.as_str(), p.author_id.as_str())).collect();
    let mut out = BTreeMap::new();
    for p in posts {
        if let Some(o) = &p.retweet_of {
            if let Some(&a) = author.get(o.as_str()) {
                if a != p.author_id {
                    *out.entry((p.author_id.clone(), a.to_string())).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

#[test]
fn three_batches_commit_replay_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let g = groups(&[8, 8, 8], "u");
    let mut all = Vec::new();
    let mut in_memory = None;
    for b in 1..=3 {
        let (text, posts) = twitter_batch(b, &g, 3, 7);
        all.extend(posts);
        let report = e.ingest("tw", text.as_bytes(), &format!("batch{b}.jsonl"), &opts(b as u64), &|_| {}).unwrap();
        assert_eq!(report.batch_id, b as u64);
        assert_eq!(report.outcome.accepted + report.outcome.rejects.len() as u64, report.outcome.line_count);
        in_memory = Some(report);
    }
    assert_eq!(e.store().journal("tw").unwrap().len(), 3);
    let state = e.load("tw").unwrap();
    assert_eq!(state.generation, 3);
    assert_eq!(state.version_tag(), in_memory.unwrap().version);
    assert_eq!(state.corpus.len(), all.len());

    let oracle = retweet_oracle(&all);
    assert_eq!(state.graph.edge_count(), oracle.len());
    for ((s, d), w) in &oracle {
        assert_eq!(state.graph.weight(s, d), *w, "{s} -> {d}");
    }

    let report = e.audit("tw").unwrap();
    assert!(report.identical(), "{:?}", report.mismatches);
    assert_eq!(report.generations, 3);

    // reload is bit-exact
    let again = e.load("tw").unwrap();
    let a = state.layout.as_ref().unwrap();
    let b = again.layout.as_ref().unwrap();
    assert_eq!(a.ids, b.ids);
    for (p, q) in a.positions.iter().zip(&b.positions) {
        assert_eq!(p[0].to_bits(), q[0].to_bits());
        assert_eq!(p[1].to_bits(), q[1].to_bits());
    }
    assert_eq!(state.partition, again.partition);
    assert_eq!(state.artifacts(), again.artifacts());
}

#[test]
fn in_memory_result_matches_reloaded_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let g = groups(&[6, 6], "u");
    let (t1, _) = twitter_batch(1, &g, 2, 1);
    e.ingest("tw", t1.as_bytes(), "b1", &opts(1), &|_| {}).unwrap();
    let before = e.load("tw").unwrap();
    let (t2, _) = twitter_batch(2, &g, 2, 1);
    let params_seed = 2;
    e.ingest("tw", t2.as_bytes(), "b2", &opts(params_seed), &|_| {}).unwrap();
    let Operation::Batch { batch, louvain_seed, layout_seed, threshold, layout, topics, .. } =
        e.store().journal("tw").unwrap()[1].op.clone()
    else {
        panic!()
    };
    let params = socnet_core::engine::BatchParams { batch, louvain_seed, layout_seed, threshold, layout, topics };
    let (direct, _, _) = socnet_core::engine::apply_batch(&before, t2.as_bytes(), &params, e.execution()).unwrap();
    assert_eq!(direct.artifacts(), e.load("tw").unwrap().artifacts());
}

#[test]
fn duplicate_batch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let (text, _) = twitter_batch(1, &groups(&[4, 4], "u"), 2, 3);
    e.ingest("tw", text.as_bytes(), "a.jsonl", &opts(1), &|_| {}).unwrap();
    let err = e.ingest("tw", text.as_bytes(), "copy.jsonl", &opts(2), &|_| {}).unwrap_err();
    assert!(matches!(err, Error::DuplicateBatch { batch_id: 1, .. }), "{err}");
    assert!(err.to_string().contains("already ingested"));
    assert_eq!(e.store().journal("tw").unwrap().len(), 1);
}

#[test]
fn crash_at_any_point_keeps_previous_generation() {
    for point in [CrashPoint::AfterBatchFiles, CrashPoint::AfterSnapshot, CrashPoint::AfterJournal] {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path());
        e.create("tw", Platform::Twitter).unwrap();
        let g = groups(&[5, 5], "u");
        let (t1, _) = twitter_batch(1, &g, 2, 5);
        e.ingest("tw", t1.as_bytes(), "b1", &opts(1), &|_| {}).unwrap();
        let before = e.load("tw").unwrap().artifacts();

        let (t2, _) = twitter_batch(2, &g, 2, 5);
        e.store().inject_crash(Some(point));
        assert!(e.ingest("tw", t2.as_bytes(), "b2", &opts(2), &|_| {}).is_err());

        // a fresh process sees the pre-batch state
        let reopened = Store::open(dir.path()).unwrap();
        let st = reopened.load("tw").unwrap();
        assert_eq!(st.generation, 1, "{point:?}");
        assert_eq!(st.artifacts(), before, "{point:?}");
        assert_eq!(reopened.journal("tw").unwrap().len(), 1);

        // and the batch can be retried
        e.ingest("tw", t2.as_bytes(), "b2", &opts(2), &|_| {}).unwrap();
        assert_eq!(e.store().journal("tw").unwrap().len(), 2);
        assert!(e.audit("tw").unwrap().identical(), "{point:?}");
    }
}

#[test]
fn writer_lock_rejects_concurrent_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let _held = e.store().lock("tw").unwrap();
    let (text, _) = twitter_batch(1, &groups(&[3], "u"), 1, 1);
    assert!(matches!(e.ingest("tw", text.as_bytes(), "x", &opts(1), &|_| {}), Err(Error::Locked(_))));
}

#[test]
fn rejects_are_counted_not_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("yt", Platform::Youtube).unwrap();
    let lines = [
        r#"{"id":"c1","platform":"youtube","author_id":"a","text":"hi","created_at":"2024-01-01T00:00:00Z","video_id":"v","channel_id":"ch","embedding":[1.0,2.0]}"#,
        r#"{"id":"c2","platform":"twitter","author_id":"a","text":"hi","created_at":"2024-01-01T00:00:00Z"}"#,
        r#"{"id":"c1","platform":"youtube","author_id":"b","text":"dup","created_at":"2024-01-01T00:00:00Z","video_id":"v","channel_id":"ch"}"#,
        r#"{"id":"c3","platform":"youtube","author_id":"b","text":"x","created_at":"2024-01-01T00:00:00Z","country":"FR"}"#,
        r#"{"id":"c4","platform":"youtube","author_id":"b","text":"x","created_at":"2024-01-01T00:00:00Z","video_id":"v","channel_id":"ch","embedding":[1.0]}"#,
        "not json",
        r#"{"id":"c5","platform":"youtube","author_id":"b","text":"reply","created_at":"2024-01-01T00:01:00Z","video_id":"v","parent_comment_id":"c1"}"#,
    ];
    let body = lines.join("\n") + "\n";
    let r = e.ingest("yt", body.as_bytes(), "mixed", &opts(1), &|_| {}).unwrap();
    assert_eq!(r.outcome.line_count, 7);
    assert_eq!(r.outcome.accepted, 2);
    let lines_rejected: Vec<u64> = r.outcome.rejects.iter().map(|x| x.line).collect();
    assert_eq!(lines_rejected, vec![2, 3, 4, 5, 6]);
    assert!(r.outcome.rejects[2].reason.contains("geolocation not supported for youtube"));
    assert!(r.outcome.rejects[3].reason.contains("embedding dimension"));
    let st = e.load("yt").unwrap();
    // channel is a user; the top-level comment replies to it, the reply to the commenter
    assert_eq!(st.graph.weight("a", "ch"), 1);
    assert_eq!(st.graph.weight("b", "a"), 1);
    assert!(st.users.get("ch").is_some());
}

#[test]
fn labels_persist_and_renames_survive_batches() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let g = groups(&[10, 10], "u");
    let (t1, _) = twitter_batch(1, &g, 4, 11);
    e.ingest("tw", t1.as_bytes(), "b1", &opts(1), &|_| {}).unwrap();
    let s1 = e.load("tw").unwrap();
    let p1 = s1.partition.clone().unwrap();
    let label = p1.label_of("u0_0").unwrap();
    e.rename("tw", LabelKind::Community, label, "K-pop fans").unwrap();
    e.rename("tw", LabelKind::Community, label, "K-pop fans").unwrap();
    assert!(matches!(e.rename("tw", LabelKind::Community, 999, "x"), Err(Error::UnknownCommunity(999))));

    let (t2, _) = twitter_batch(2, &g, 4, 11);
    e.ingest("tw", t2.as_bytes(), "b2", &opts(2), &|_| {}).unwrap();
    let s2 = e.load("tw").unwrap();
    assert_eq!(s2.partition.as_ref().unwrap().label_of("u0_0"), Some(label));
    assert_eq!(s2.registry.name(label), "K-pop fans");
    assert_eq!(s2.version_tag(), "g2-r2");
    assert!(e.audit("tw").unwrap().identical());
}

#[test]
fn topics_refit_and_rename() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let g = groups(&[6, 6], "u");
    let (t1, _) = twitter_batch(1, &g, 1, 2);
    let o = RunOptions {
        seed: Some(1),
        k_topics: Some(2),
        ..Default::default()
    };
    e.ingest("tw", t1.as_bytes(), "b1", &o, &|_| {}).unwrap();
    e.rename("tw", LabelKind::Topic, 1, "UK football news").unwrap();
    assert!(matches!(e.rename("tw", LabelKind::Topic, 2, "x"), Err(Error::UnknownTopic(2))));
    let (t2, _) = twitter_batch(2, &g, 1, 2);
    e.ingest("tw", t2.as_bytes(), "b2", &opts(2), &|_| {}).unwrap();
    let s = e.load("tw").unwrap();
    let model = s.topics.as_ref().unwrap();
    assert_eq!(model.label(1), "UK football news");
    assert_eq!(model.post_ids.len(), 24, "new embedded posts are assigned at ingest");

    let s = e.recluster("tw", &RunOptions { seed: Some(3), k_topics: Some(3), ..Default::default() }).unwrap();
    assert_eq!(s.topics.as_ref().unwrap().label(1), "Topic 1");
    assert_eq!(s.names.previous_topic_names, vec!["UK football news".to_string()]);
    let s = e.relayout("tw", &RunOptions { seed: Some(4), iterations: Some(10), ..Default::default() }).unwrap();
    assert_eq!(s.generation, 4);
    let report = e.audit("tw").unwrap();
    assert!(report.identical(), "{:?}", report.mismatches);
}

#[test]
fn audit_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let (t1, _) = twitter_batch(1, &groups(&[4, 4], "u"), 2, 9);
    e.ingest("tw", t1.as_bytes(), "b1", &opts(1), &|_| {}).unwrap();
    let path = dir.path().join("tw/snapshots/000001/layout.state");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut parts: Vec<String> = lines[1].split(' ').map(String::from).collect();
    let x: f64 = parts[1].parse().unwrap();
    parts[1] = format!("{:?}", f64::from_bits(x.to_bits() ^ 1));
    lines[1] = parts.join(" ");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let report = e.audit("tw").unwrap();
    assert!(!report.identical());
    assert!(report.mismatches.iter().any(|m| m.contains("layout.state")));
    assert!(matches!(e.load("tw"), Err(Error::Corrupt { .. })));
}

#[test]
fn export_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path());
    e.create("tw", Platform::Twitter).unwrap();
    let (t1, _) = twitter_batch(1, &groups(&[4, 4], "u"), 2, 9);
    let o = RunOptions { seed: Some(1), k_topics: Some(2), ..Default::default() };
    e.ingest("tw", t1.as_bytes(), "b1", &o, &|_| {}).unwrap();
    let out = dir.path().join("export");
    e.export("tw", &out).unwrap();
    let layout = std::fs::read_to_string(out.join("layout.tsv")).unwrap();
    assert_eq!(layout.lines().count(), 8);
    for line in layout.lines() {
        assert_eq!(line.split(' ').count(), 5);
    }
    let edges = std::fs::read_to_string(out.join("graph.edges")).unwrap();
    assert!(edges.lines().all(|l| l.split(' ').count() == 3));
    let topics = std::fs::read_to_string(out.join("topics.tsv")).unwrap();
    assert_eq!(topics.lines().count(), 8);
}
