//! Large synthetic Twitter corpora for throughput checks.

use chrono::DateTime;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &[
    "match", "goal", "team", "fans", "concert", "night", "vote", "claim", "news", "music", "kpop",
    "football", "london", "paris", "tokyo", "video", "watch", "love", "election", "policy", "price",
    "market", "game", "score", "ticket", "rally", "debate", "album", "tour", "stream",
];
const LANGS: &[&str] = &["en", "en", "en", "fr", "es", "ja", "de"];
const SENTIMENTS: &[&str] = &["positive", "negative", "neutral", "unknown"];
const COUNTRIES: &[&str] = &["GB", "FR", "US", "JP", "ES", "DE"];
const TAGS: &[&str] = &["#goal", "#KPop", "#news", "#vote", "#live"];
pub const START: i64 = 1_704_067_200;
pub const SPAN: i64 = 90 * 86_400;

pub struct SynthParams {
    pub users: usize,
    pub groups: usize,
    pub retweet_share: f64,
    pub in_group: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            users: 100_000,
            groups: 200,
            retweet_share: 0.6,
            in_group: 0.85,
        }
    }
}

/// Consecutive batches of `per_batch` posts each. Retweets point at originals
/// from the same or earlier batches, mostly within the retweeter's group.
pub fn batches(count: usize, per_batch: usize, p: &SynthParams, seed: u64) -> impl Iterator<Item = String> + '_ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // originals by group: (post id, author)
    let mut originals: Vec<Vec<u32>> = vec![Vec::new(); p.groups];
    let mut next_id: u64 = 0;
    let total = (count * per_batch) as i64;
    (0..count).map(move |_| {
        let mut out = String::with_capacity(per_batch * 220);
        for _ in 0..per_batch {
            let id = next_id;
            next_id += 1;
            let author = rng.random_range(0..p.users);
            let group = author % p.groups;
            // timestamps advance with the post index so batches are chronological
            let ts = START + (id as i64 * SPAN) / total + rng.random_range(0..60);
            let created = DateTime::from_timestamp(ts, 0).unwrap().format("%Y-%m-%dT%H:%M:%SZ");
            let lang = LANGS.choose(&mut rng).unwrap();
            let sentiment = SENTIMENTS.choose(&mut rng).unwrap();
            let source_group = if rng.random_bool(p.in_group) { group } else { rng.random_range(0..p.groups) };
            let pool = &originals[source_group];
            if !pool.is_empty() && rng.random_bool(p.retweet_share) {
                let orig = pool[rng.random_range(0..pool.len())];
                out += &format!(
                    "{{\"id\":\"p{id}\",\"platform\":\"twitter\",\"author_id\":\"u{author}\",\"text\":\"RT p{orig}\",\"created_at\":\"{created}\",\"language\":\"{lang}\",\"sentiment\":\"{sentiment}\",\"retweet_of\":\"p{orig}\"}}\n"
                );
            } else {
                let words: Vec<&str> = (0..rng.random_range(4..12)).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
                let tag = TAGS.choose(&mut rng).unwrap();
                let country = if rng.random_bool(0.3) {
                    format!(",\"country\":\"{}\"", COUNTRIES.choose(&mut rng).unwrap())
                } else {
                    String::new()
                };
                out += &format!(
                    "{{\"id\":\"p{id}\",\"platform\":\"twitter\",\"author_id\":\"u{author}\",\"text\":\"{} {tag}\",\"created_at\":\"{created}\",\"language\":\"{lang}\",\"sentiment\":\"{sentiment}\",\"hashtags\":[\"{tag}\"],\"engagement\":{}{country}}}\n",
                    words.join(" "),
                    rng.random_range(0..1000)
                );
                originals[group].push(id as u32);
            }
        }
        out
    })
}
