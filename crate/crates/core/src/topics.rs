//! Topic discovery over precomputed post embeddings: k-means clustering, a
//! 2D PCA map, and exact cosine nearest-neighbour search.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::escape_field;
use crate::model::{Post, PostId};
use crate::par::Execution;

pub const MAX_LLOYD_ITERATIONS: usize = 100;
const MAX_HARTIGAN_SWEEPS: usize = 100;
const PCA_TOLERANCE: f64 = 1e-9;
const PCA_MAX_ITERATIONS: usize = 10_000;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after every assignment change, in order.
    pub inertia_history: Vec<f64>,
    pub lloyd_iterations: usize,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

pub fn inertia(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    (sums, counts)
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Seeded k-means++ followed by Lloyd iterations (until the assignment is
/// fixed, at most 100) and a single-point-move refinement pass, so that no
/// single point reassignment lowers the inertia. Empty clusters are refilled
/// with the point farthest from its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, exec: Execution) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut distinct: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|x| x.to_bits()).collect())
        .collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::TooFewEmbeddings {
            needed: k,
            found: distinct.len(),
        });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("distinct points remain");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().expect("non-empty")));
        }
    }

    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        let next = exec.map_slice(points, |p| nearest(p, &centroids));
        if next == assignment {
            break;
        }
        assignment = next;
        iterations += 1;
        history.push(inertia(points, &assignment, &centroids));
        let (mut cen, mut counts) = means(points, &assignment, k, dim);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // farthest point whose removal does not empty its own cluster
            let far = (0..points.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &cen[assignment[a]])
                        .total_cmp(&sq_dist(&points[b], &cen[assignment[b]]))
                        .then(b.cmp(&a))
                })
                .expect("k <= distinct points");
            counts[assignment[far]] -= 1;
            assignment[far] = c;
            counts[c] = 1;
            let refreshed = means(points, &assignment, k, dim);
            cen = refreshed.0;
            history.push(inertia(points, &assignment, &cen));
        }
        centroids = cen;
    }
    if assignment.is_empty() {
        assignment = exec.map_slice(points, |p| nearest(p, &centroids));
    }

    // single-point moves that strictly lower inertia
    let (mut centroids, mut counts) = means(points, &assignment, k, dim);
    for _ in 0..MAX_HARTIGAN_SWEEPS {
        let mut moved = false;
        for i in 0..points.len() {
            let a = assignment[i];
            let na = counts[a] as f64;
            if counts[a] <= 1 {
                continue;
            }
            let remove_gain = na / (na - 1.0) * sq_dist(&points[i], &centroids[a]);
            let mut best = a;
            let mut best_cost = remove_gain;
            for (b, cen) in centroids.iter().enumerate() {
                if b == a {
                    continue;
                }
                let nb = counts[b] as f64;
                let cost = nb / (nb + 1.0) * sq_dist(&points[i], cen);
                if cost < best_cost - 1e-12 * remove_gain.max(1e-300) {
                    best = b;
                    best_cost = cost;
                }
            }
            if best != a {
                let p = &points[i];
                let nb = counts[best] as f64;
                for (c, x) in centroids[a].iter_mut().zip(p) {
                    *c = (*c * na - x) / (na - 1.0);
                }
                for (c, x) in centroids[best].iter_mut().zip(p) {
                    *c = (*c * nb + x) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[best] += 1;
                assignment[i] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        let fresh = means(points, &assignment, k, dim);
        centroids = fresh.0;
        history.push(inertia(points, &assignment, &centroids));
    }
    let (centroids, _) = means(points, &assignment, k, dim);
    let final_inertia = inertia(points, &assignment, &centroids);
    if history.last() != Some(&final_inertia) {
        history.push(final_inertia);
    }
    Ok(KMeans {
        assignment,
        centroids,
        inertia_history: history,
        lloyd_iterations: iterations,
    })
}

/// Mean-centred PCA basis onto two axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit axes, or zero vectors when the data has no variance in that direction.
    pub axes: [Vec<f64>; 2],
    pub variances: [f64; 2],
}

impl Pca {
    pub fn project(&self, p: &[f64]) -> [f64; 2] {
        let centred: Vec<f64> = p.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        [dot(&centred, &self.axes[0]), dot(&centred, &self.axes[1])]
    }
}

/// Top-2 principal axes by power iteration with deflation.
pub fn fit_pca(points: &[Vec<f64>], seed: u64, exec: Execution) -> Result<Pca> {
    if points.len() < 2 {
        return Err(Error::TooFewEmbeddings {
            needed: 2,
            found: points.len(),
        });
    }
    let dim = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let total_var: f64 = centred.iter().map(|c| dot(c, c)).sum::<f64>() / n;

    // covariance-vector product without forming the matrix
    let cov_times = |v: &[f64]| -> Vec<f64> {
        let proj = exec.map_slice(&centred, |c| dot(c, v));
        let mut out = vec![0.0; dim];
        for (c, s) in centred.iter().zip(&proj) {
            for (o, x) in out.iter_mut().zip(c) {
                *o += s * x;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        out
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes: [Vec<f64>; 2] = [vec![0.0; dim], vec![0.0; dim]];
    let mut variances = [0.0; 2];
    for a in 0..2 {
        if total_var <= 0.0 {
            break;
        }
        let orthogonalize = |v: &mut Vec<f64>, axes: &[Vec<f64>; 2]| {
            for prev in &axes[..a] {
                let d = dot(v, prev);
                for (x, p) in v.iter_mut().zip(prev) {
                    *x -= d * p;
                }
            }
        };
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &axes);
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITERATIONS {
            let mut w = cov_times(&v);
            orthogonalize(&mut w, &axes);
            let nw = norm(&w);
            lambda = nw;
            if nw <= 1e-12 * total_var {
                lambda = 0.0;
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let delta = sq_dist(&w, &v).sqrt();
            v = w;
            if delta < PCA_TOLERANCE {
                break;
            }
        }
        if lambda == 0.0 {
            break;
        }
        // sign convention: largest-magnitude loading is positive
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        variances[a] = dot(&v, &cov_times(&v));
        axes[a] = v;
    }
    Ok(Pca { mean, axes, variances })
}

/// Projects every point onto the top-2 principal axes.
pub fn project_2d(points: &[Vec<f64>], seed: u64, exec: Execution) -> Result<Vec<[f64; 2]>> {
    let pca = fit_pca(points, seed, exec)?;
    Ok(exec.map_slice(points, |p| pca.project(p)))
}

pub enum Query<'a> {
    Post(&'a str),
    Vector(&'a [f64]),
}

/// Exact top-k cosine similarity over `(id, vector)` pairs; ties by id.
pub fn nearest_claims(
    corpus: &[(PostId, Vec<f64>)],
    query: &[f64],
    k: usize,
    exec: Execution,
) -> Result<Vec<(PostId, f64)>> {
    let qn = norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroNormQuery);
    }
    if let Some((_, v)) = corpus.first() {
        if v.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                got: query.len(),
            });
        }
    }
    let sims = exec.map_slice(corpus, |(_, v)| {
        let n = norm(v);
        if n == 0.0 {
            0.0
        } else {
            (dot(v, query) / (n * qn)).clamp(-1.0, 1.0)
        }
    });
    let mut ranked: Vec<(usize, f64)> = sims.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| corpus[a.0].0.cmp(&corpus[b.0].0)));
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|(i, s)| (corpus[i].0.clone(), s)).collect())
}

/// Fitted topic clustering and semantic map over the embedded posts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub pca: Pca,
    pub post_ids: Vec<PostId>,
    pub assignment: Vec<usize>,
    pub projection: Vec<[f64; 2]>,
    pub labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<PostId, usize>,
}

fn embedding_f64(p: &Post) -> Option<Vec<f64>> {
    p.embedding.as_ref().map(|e| e.iter().map(|&x| x as f64).collect())
}

impl TopicModel {
    pub fn default_label(topic: usize) -> String {
        format!("Topic {topic}")
    }

    pub fn fit(posts: &[Post], k: usize, seed: u64, exec: Execution) -> Result<Self> {
        let (ids, points): (Vec<PostId>, Vec<Vec<f64>>) = posts
            .iter()
            .filter_map(|p| embedding_f64(p).map(|e| (p.id.clone(), e)))
            .unzip();
        if points.is_empty() {
            return Err(Error::TooFewEmbeddings { needed: k.max(1), found: 0 });
        }
        let km = kmeans(&points, k, seed, exec)?;
        let pca = if points.len() >= 2 {
            fit_pca(&points, seed, exec)?
        } else {
            Pca {
                mean: points[0].clone(),
                axes: [vec![0.0; points[0].len()], vec![0.0; points[0].len()]],
                variances: [0.0; 2],
            }
        };
        let projection = exec.map_slice(&points, |p| pca.project(p));
        let mut model = TopicModel {
            k,
            dim: points[0].len(),
            seed,
            centroids: km.centroids,
            pca,
            post_ids: ids,
            assignment: km.assignment,
            projection,
            labels: (0..k).map(Self::default_label).collect(),
            index: HashMap::new(),
        };
        model.reindex();
        Ok(model)
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self
            .post_ids
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
    }

    /// Assigns newly ingested embedded posts to their nearest centroid and
    /// projects them with the fitted axes. Centroids are not refitted.
    pub fn assign_new(&mut self, posts: &[Post]) {
        for p in posts {
            if self.index.contains_key(&p.id) {
                continue;
            }
            let Some(e) = embedding_f64(p) else { continue };
            if e.len() != self.dim {
                continue;
            }
            self.index.insert(p.id.clone(), self.post_ids.len());
            self.post_ids.push(p.id.clone());
            self.assignment.push(nearest(&e, &self.centroids));
            self.projection.push(self.pca.project(&e));
        }
    }

    pub fn topic_of(&self, post_id: &str) -> Option<usize> {
        self.index.get(post_id).map(|&i| self.assignment[i])
    }

    pub fn label(&self, topic: usize) -> &str {
        &self.labels[topic]
    }

    pub fn rename(&mut self, topic: usize, name: &str) -> Result<()> {
        let slot = self.labels.get_mut(topic).ok_or(Error::UnknownTopic(topic))?;
        *slot = name.to_string();
        Ok(())
    }

    /// Export table: `post_id x y topic_index topic_label` per embedded post.
    pub fn map_table(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.post_ids.iter().enumerate() {
            let t = self.assignment[i];
            let p = self.projection[i];
            let _ = writeln!(out, "{} {} {} {} {}", escape_field(id), p[0], p[1], t, escape_field(&self.labels[t]));
        }
        out
    }
}

/// Resolves a claim query against the embedded posts.
pub fn nearest_to(posts: &[Post], query: Query<'_>, k: usize, exec: Execution) -> Result<Vec<(PostId, f64)>> {
    let corpus: Vec<(PostId, Vec<f64>)> = posts
        .iter()
        .filter_map(|p| embedding_f64(p).map(|e| (p.id.clone(), e)))
        .collect();
    let owned;
    let q: &[f64] = match query {
        Query::Vector(v) => v,
        Query::Post(id) => {
            let post = posts
                .iter()
                .find(|p| p.id == id)
                .ok_or_else(|| Error::UnknownPost(id.to_string()))?;
            owned = embedding_f64(post).ok_or_else(|| Error::MissingEmbedding(id.to_string()))?;
            &owned
        }
    };
    nearest_claims(&corpus, q, k, exec)
}
