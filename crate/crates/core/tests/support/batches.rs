//! Synthetic ingestion files with planted community structure.

#![allow(dead_code)]

use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socnet_core::{Platform, Post, Sentiment};

pub const DAY: i64 = 86_400;
pub const START: i64 = 1_704_067_200;

/// Twitter batch `b` (1-based): every user in `groups` posts originals, then
/// retweets originals of its own group (90%) or of other groups.
pub fn twitter_batch(b: usize, groups: &[Vec<String>], per_user: usize, seed: u64) -> (String, Vec<Post>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64) << 32);
    let t0 = START + (b as i64 - 1) * DAY;
    let mut posts = Vec::new();
    let mut originals: Vec<Vec<String>> = vec![Vec::new(); groups.len()];
    for (g, users) in groups.iter().enumerate() {
        for u in users {
            let id = format!("b{b}-o-{u}");
            let mut p = Post::new(id.clone(), Platform::Twitter, u.as_str(), format!("group {g} news from {u}"), DateTime::from_timestamp(t0 + rng.random_range(0..3_600), 0).unwrap());
            p.language = "en".into();
            p.sentiment = Sentiment::ALL[rng.random_range(0..4)];
            p.embedding = Some(vec![g as f32 * 5.0 + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]);
            posts.push(p);
            originals[g].push(id);
        }
    }
    let mut n = 0;
    for (g, users) in groups.iter().enumerate() {
        for u in users {
            for _ in 0..per_user {
                let target_group = if rng.random_bool(0.9) || groups.len() == 1 { g } else { (g + 1 + rng.random_range(0..groups.len() - 1)) % groups.len() };
                let pool = &originals[target_group];
                let orig = &pool[rng.random_range(0..pool.len())];
                let mut p = Post::new(
                    format!("b{b}-r{n}"),
                    Platform::Twitter,
                    u.as_str(),
                    format!("RT {orig}"),
                    DateTime::from_timestamp(t0 + 3_600 + rng.random_range(0..DAY - 3_600), 0).unwrap(),
                );
                p.retweet_of = Some(orig.clone());
                p.language = "en".into();
                posts.push(p);
                n += 1;
            }
        }
    }
    let text = posts.iter().map(|p| p.to_record() + "\n").collect();
    (text, posts)
}

pub fn groups(sizes: &[usize], prefix: &str) -> Vec<Vec<String>> {
    sizes
        .iter()
        .enumerate()
        .map(|(g, &n)| (0..n).map(|i| format!("{prefix}{g}_{i}")).collect())
        .collect()
}
