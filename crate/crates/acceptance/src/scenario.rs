//! Three Twitter batches with planted community dynamics: growth, a partial
//! switch of members between communities, and a split.

use std::collections::{BTreeMap, BTreeSet};

use chrono::DateTime;

const T0: i64 = 1_719_792_000;
const DAY: i64 = 86_400;

/// Directed retweet counts for one batch: (retweeter, author) → count.
#[derive(Default)]
pub struct RetweetBatch {
    weights: BTreeMap<(String, String), u64>,
}

impl RetweetBatch {
    fn both(&mut self, x: &str, y: &str, w: u64) {
        *self.weights.entry((x.to_string(), y.to_string())).or_insert(0) += w;
        *self.weights.entry((y.to_string(), x.to_string())).or_insert(0) += w;
    }

    fn clique(&mut self, members: &[String], w: u64) {
        for (i, x) in members.iter().enumerate() {
            for y in &members[i + 1..] {
                self.both(x, y, w);
            }
        }
    }

    fn between(&mut self, xs: &[String], ys: &[String], w: u64) {
        for x in xs {
            for y in ys {
                self.both(x, y, w);
            }
        }
    }

    /// NDJSON: one original per retweeted author, then one record per retweet.
    pub fn to_ndjson(&self, batch: u64) -> String {
        let t = T0 + (batch as i64 - 1) * DAY;
        let ts = |s: i64| DateTime::from_timestamp(t + s, 0).unwrap().format("%Y-%m-%dT%H:%M:%SZ").to_string();
        let authors: BTreeSet<&str> = self.weights.keys().map(|(_, a)| a.as_str()).collect();
        let mut out = String::new();
        for a in &authors {
            out += &format!(
                "{{\"id\":\"b{batch}-{a}\",\"platform\":\"twitter\",\"author_id\":\"{a}\",\"text\":\"update from {a}\",\"created_at\":\"{}\",\"language\":\"en\"}}\n",
                ts(0)
            );
        }
        let mut n = 0;
        for ((x, a), &w) in &self.weights {
            for _ in 0..w {
                n += 1;
                out += &format!(
                    "{{\"id\":\"b{batch}-rt{n}\",\"platform\":\"twitter\",\"author_id\":\"{x}\",\"text\":\"RT update from {a}\",\"created_at\":\"{}\",\"language\":\"en\",\"retweet_of\":\"b{batch}-{a}\"}}\n",
                    ts(60 + n % 3_600)
                );
            }
        }
        out
    }
}

pub fn names(prefix: &str, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| format!("{prefix}{i}")).collect()
}

pub struct Scenario {
    pub batches: Vec<RetweetBatch>,
    /// Planted communities after each batch.
    pub planted: Vec<Vec<BTreeSet<String>>>,
}

fn set(groups: &[&[String]]) -> BTreeSet<String> {
    groups.iter().flat_map(|g| g.iter().cloned()).collect()
}

pub fn build() -> Scenario {
    let a_old = names("a", 0..10);
    let a_new = names("a", 10..15);
    let b_moving = names("b", 0..3);
    let b_rest = names("b", 3..10);
    let b_all = names("b", 0..10);
    let c_switch = names("c", 0..2);
    let c_rest = names("c", 2..12);
    let c_all = names("c", 0..12);

    // batch 1: three dense groups with a few weak bridges
    let mut b1 = RetweetBatch::default();
    b1.clique(&a_old, 1);
    b1.clique(&b_all, 1);
    b1.clique(&c_all, 1);
    b1.both("a0", "b0", 1);
    b1.both("b5", "c5", 1);

    // batch 2: growth of A by five new users; c0 and c1 switch to B
    let mut b2 = RetweetBatch::default();
    b2.between(&a_new, &a_old, 2);
    b2.clique(&a_new, 2);
    b2.between(&c_switch, &b_all, 6);
    b2.clique(&c_switch, 3);

    // batch 3: A splits and the newcomers take three members of B with them;
    // the other groups are reinforced at the same weight
    let mut b3 = RetweetBatch::default();
    b3.clique(&a_old, 30);
    let fragment: Vec<String> = a_new.iter().chain(&b_moving).cloned().collect();
    b3.clique(&fragment, 30);
    let b_core: Vec<String> = b_rest.iter().chain(&c_switch).cloned().collect();
    b3.clique(&b_core, 30);
    b3.clique(&c_rest, 30);

    Scenario {
        batches: vec![b1, b2, b3],
        planted: vec![
            vec![set(&[&a_old]), set(&[&b_all]), set(&[&c_all])],
            vec![set(&[&a_old, &a_new]), set(&[&b_all, &c_switch]), set(&[&c_rest])],
            vec![set(&[&a_old]), set(&[&a_new, &b_moving]), set(&[&b_rest, &c_switch]), set(&[&c_rest])],
        ],
    }
}
