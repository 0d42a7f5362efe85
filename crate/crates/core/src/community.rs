//! Louvain modularity clustering and overlap-based label tracking across batches.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{InteractionGraph, Undirected};
use crate::model::UserId;

pub type LabelId = u64;

/// Default overlap a new community needs to inherit an old label.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Modularity of `assignment` on the undirected weighted graph, resolution 1.
/// Defined as 0 for a graph without edges.
pub fn modularity(graph: &Undirected, assignment: &[usize]) -> f64 {
    let n = graph.node_count();
    assert_eq!(assignment.len(), n, "assignment must cover every node");
    let two_m: f64 = graph.weights.iter().sum();
    if two_m <= 0.0 {
        return 0.0;
    }
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for u in 0..n {
        let cu = assignment[u];
        for (v, w) in graph.neighbors(u) {
            total[cu] += w;
            if assignment[v] == cu {
                internal[cu] += w;
            }
        }
    }
    // internal[c] counts each intra edge twice, so Σ_c e_c/m - (d_c/2m)^2
    // = (2m Σ internal - Σ d_c^2) / (2m)^2; exact for integer weights.
    let num = two_m * internal.iter().sum::<f64>() - total.iter().map(|d| d * d).sum::<f64>();
    num / (two_m * two_m)
}

/// Modularity keyed by user id; users missing from `assignment` are singletons.
pub fn graph_modularity(graph: &InteractionGraph, assignment: &HashMap<UserId, usize>) -> f64 {
    let mut dense = Vec::with_capacity(graph.node_count());
    let mut extra = assignment.values().copied().max().map_or(0, |c| c + 1);
    for id in graph.ids() {
        match assignment.get(id) {
            Some(&c) => dense.push(c),
            None => {
                dense.push(extra);
                extra += 1;
            }
        }
    }
    modularity(&graph.undirected(), &dense)
}

/// Working graph for one Louvain level: adjacency without self-loops plus a
/// separate self-loop weight per node.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    strength: Vec<f64>,
}

impl Level {
    fn from_undirected(g: &Undirected) -> Self {
        let n = g.node_count();
        let adj: Vec<Vec<(usize, f64)>> = (0..n).map(|u| g.neighbors(u).collect()).collect();
        let strength = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
        Level {
            adj,
            self_loop: vec![0.0; n],
            strength,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Collapses each community into one node. `comm` must be dense.
    fn aggregate(&self, comm: &[usize], k: usize) -> Level {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loop = vec![0.0; k];
        for u in 0..self.len() {
            let cu = comm[u];
            self_loop[cu] += self.self_loop[u];
            for &(v, w) in &self.adj[u] {
                let cv = comm[v];
                if cu == cv {
                    // each intra edge is seen from both endpoints
                    self_loop[cu] += w / 2.0;
                } else {
                    *maps[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        let adj: Vec<Vec<(usize, f64)>> = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        let strength = adj
            .iter()
            .zip(&self_loop)
            .map(|(l, s)| l.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        Level {
            adj,
            self_loop,
            strength,
        }
    }

    /// Greedy local moving until a full sweep makes no move. Returns whether
    /// any node changed community.
    fn local_moving(&self, comm: &mut [usize], two_m: f64, rng: &mut ChaCha8Rng) -> bool {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut moves = Moves::new(self, comm, two_m);
        let mut moved_any = false;
        loop {
            order.shuffle(rng);
            let mut moved = false;
            for &u in &order {
                moved |= moves.improve(u).is_some();
            }
            if !moved {
                break;
            }
            moved_any = true;
        }
        moved_any
    }
}

/// Community bookkeeping for single-node moves on one level.
struct Moves<'a> {
    level: &'a Level,
    comm: &'a mut [usize],
    two_m: f64,
    tot: Vec<f64>,
    size: Vec<usize>,
    /// Free community slots; entries whose community was refilled are skipped.
    empty: Vec<usize>,
    links: Vec<f64>,
    touched: Vec<usize>,
}

impl<'a> Moves<'a> {
    fn new(level: &'a Level, comm: &'a mut [usize], two_m: f64) -> Self {
        let n = level.len();
        let slots = n.max(comm.iter().copied().max().map_or(0, |c| c + 1));
        let mut tot = vec![0.0; slots];
        let mut size = vec![0usize; slots];
        for u in 0..n {
            tot[comm[u]] += level.strength[u];
            size[comm[u]] += 1;
        }
        let empty = (0..slots).rev().filter(|&c| size[c] == 0).collect();
        Moves {
            level,
            comm,
            two_m,
            tot,
            size,
            empty,
            links: vec![0.0; slots],
            touched: Vec::new(),
        }
    }

    fn free_slot(&mut self) -> usize {
        loop {
            let c = self.empty.pop().expect("a free community slot");
            if self.size[c] == 0 {
                return c;
            }
        }
    }

    /// Takes `u` out of its community and collects its links per community.
    fn lift(&mut self, u: usize) -> usize {
        let cu = self.comm[u];
        for &(v, w) in &self.level.adj[u] {
            let cv = self.comm[v];
            if self.links[cv] == 0.0 {
                self.touched.push(cv);
            }
            self.links[cv] += w;
        }
        self.tot[cu] -= self.level.strength[u];
        self.size[cu] -= 1;
        cu
    }

    /// Gain of `u` joining `c` after `lift`, scaled by 2m: 2m·k_in(c) − tot(c)·k_u.
    fn gain(&self, u: usize, c: usize) -> f64 {
        self.two_m * self.links[c] - self.tot[c] * self.level.strength[u]
    }

    fn place(&mut self, u: usize, from: usize, to: usize) {
        self.tot[to] += self.level.strength[u];
        self.size[to] += 1;
        self.comm[u] = to;
        if to != from && self.size[from] == 0 {
            self.empty.push(from);
        }
        for &c in &self.touched {
            self.links[c] = 0.0;
        }
        self.touched.clear();
    }

    /// Moves `u` to the community with the best gain, which may be an empty
    /// one. Returns the old community and the gain over staying (half the
    /// change of Q·4m²) when it moved.
    fn improve(&mut self, u: usize) -> Option<(usize, f64)> {
        let cu = self.lift(u);
        let eps = 1e-13 * self.two_m * self.level.strength[u];
        let stay = self.gain(u, cu);
        let mut best = Some(cu);
        let mut best_gain = stay;
        for &c in &self.touched {
            if c == cu {
                continue;
            }
            let g = self.gain(u, c);
            if g > best_gain + eps {
                best = Some(c);
                best_gain = g;
            }
        }
        // an empty community gains exactly 0; staying alone is the same move
        if self.size[cu] > 0 && 0.0 > best_gain + eps {
            best = None;
            best_gain = 0.0;
        }
        let to = best.unwrap_or_else(|| self.free_slot());
        self.place(u, cu, to);
        (to != cu).then_some((cu, best_gain - stay))
    }

    /// Moves `u` to the best community other than its own, or to an empty
    /// one when it has no other neighbouring community. Returns the old
    /// community and the gain over staying.
    fn evict(&mut self, u: usize) -> (usize, f64) {
        let cu = self.lift(u);
        let stay = self.gain(u, cu);
        let mut best: Option<(usize, f64)> = None;
        for &c in &self.touched {
            let g = self.gain(u, c);
            if c != cu && best.is_none_or(|(_, b)| g > b) {
                best = Some((c, g));
            }
        }
        let (to, g) = match best {
            Some(b) => b,
            None => (self.free_slot(), 0.0),
        };
        self.place(u, cu, to);
        (cu, g - stay)
    }

    /// Moves `u` to `to` (an empty slot when `None`) regardless of gain and
    /// returns the old community and the gain over staying.
    fn force(&mut self, u: usize, to: Option<usize>) -> (usize, f64) {
        let cu = self.lift(u);
        let stay = self.gain(u, cu);
        let to = to.unwrap_or_else(|| self.free_slot());
        let g = if self.size[to] == 0 { 0.0 } else { self.gain(u, to) };
        self.place(u, cu, to);
        (cu, g - stay)
    }
}

/// Renumbers community ids densely in order of first appearance.
fn renumber(comm: &mut [usize]) -> usize {
    let mut map: HashMap<usize, usize> = HashMap::new();
    for c in comm.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

/// Independent multi-level runs per call; the best partition wins.
const RESTARTS: usize = 8;
/// Upper bound on refinement rounds per restart.
const REFINE_ROUNDS: usize = 4;
/// Random starting bisections tried per community in the split pass.
const SPLIT_TRIES: usize = 4;
/// Refinement work allowance per call, in node visits: a fixed part that
/// covers small graphs completely plus a part per node and edge.
const BASE_WORK: u64 = 1 << 20;
const WORK_PER_ELEMENT: u64 = 32;

/// Deterministic allowance of node visits for the refinement phases.
struct Budget(u64);

impl Budget {
    fn left(&self) -> bool {
        self.0 > 0
    }

    fn charge(&mut self, units: usize) {
        self.0 = self.0.saturating_sub(units as u64);
    }
}

/// Local moving and aggregation from `start` until no level changes, then
/// local moving again on every finer level while projecting the coarse
/// partition back down to the base nodes.
fn multilevel(base: &Level, start: &[usize], two_m: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut coarse: Vec<Level> = Vec::new();
    let mut maps: Vec<Vec<usize>> = Vec::new();
    let mut comm = start.to_vec();
    loop {
        let level = coarse.last().unwrap_or(base);
        level.local_moving(&mut comm, two_m, rng);
        let k = renumber(&mut comm);
        if k == level.len() {
            break;
        }
        let next = level.aggregate(&comm, k);
        maps.push(comm);
        coarse.push(next);
        comm = (0..k).collect();
    }
    for i in (0..maps.len()).rev() {
        let level = if i == 0 { base } else { &coarse[i - 1] };
        let mut finer: Vec<usize> = maps[i].iter().map(|&c| comm[c]).collect();
        level.local_moving(&mut finer, two_m, rng);
        renumber(&mut finer);
        comm = finer;
    }
    comm
}

/// Greedy bisection of node subsets, with scratch space reused across calls.
struct Bisector {
    mark: Vec<usize>,
    side: Vec<usize>,
    stamp: usize,
}

impl Bisector {
    fn new(n: usize) -> Self {
        Bisector {
            mark: vec![0; n],
            side: vec![0; n],
            stamp: 0,
        }
    }

    fn enter(&mut self, nodes: &[usize]) {
        self.stamp += 1;
        for &u in nodes {
            self.mark[u] = self.stamp;
        }
    }

    /// Split score of the current sides, `tot(S)·tot(T) − 2m·cut(S, T)`: the
    /// modularity gain of the split over keeping `nodes` together, times 2m².
    fn score(&self, base: &Level, nodes: &[usize], two_m: f64) -> f64 {
        let mut tot = [0.0; 2];
        let mut cut = 0.0;
        for &u in nodes {
            tot[self.side[u]] += base.strength[u];
            if self.side[u] == 0 {
                for &(v, w) in &base.adj[u] {
                    if self.mark[v] == self.stamp && self.side[v] == 1 {
                        cut += w;
                    }
                }
            }
        }
        tot[0] * tot[1] - two_m * cut
    }

    /// Best of `SPLIT_TRIES` greedy two-sided local movings of `nodes` from
    /// random starts. Returns the score and the side of each node, or `None`
    /// when the budget ran out before the first try.
    fn best(
        &mut self,
        base: &Level,
        nodes: &[usize],
        two_m: f64,
        rng: &mut ChaCha8Rng,
        budget: &mut Budget,
    ) -> Option<(f64, Vec<usize>)> {
        self.enter(nodes);
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut order = nodes.to_vec();
        for _ in 0..SPLIT_TRIES {
            if !budget.left() {
                break;
            }
            let mut tot = [0.0; 2];
            for &u in nodes {
                self.side[u] = rng.random_range(0..2);
                tot[self.side[u]] += base.strength[u];
            }
            loop {
                order.shuffle(rng);
                budget.charge(order.len());
                let mut moved = false;
                for &u in &order {
                    let (s, ku) = (self.side[u], base.strength[u]);
                    let mut links = [0.0; 2];
                    for &(v, w) in &base.adj[u] {
                        if self.mark[v] == self.stamp {
                            links[self.side[v]] += w;
                        }
                    }
                    tot[s] -= ku;
                    let gain = |t: usize| two_m * links[t] - tot[t] * ku;
                    let target = if gain(1 - s) > gain(s) + 1e-13 * two_m * ku { 1 - s } else { s };
                    tot[target] += ku;
                    if target != s {
                        self.side[u] = target;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            let score = self.score(base, nodes, two_m);
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, nodes.iter().map(|&u| self.side[u]).collect()));
            }
        }
        best
    }
}

fn members(comm: &mut [usize]) -> Vec<Vec<usize>> {
    let k = renumber(comm);
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (u, &c) in comm.iter().enumerate() {
        out[c].push(u);
    }
    out
}

/// Bisects every community where the best greedy bisection raises modularity.
fn split_pass(
    base: &Level,
    comm: &mut [usize],
    two_m: f64,
    rng: &mut ChaCha8Rng,
    bisector: &mut Bisector,
    budget: &mut Budget,
) -> bool {
    let groups = members(comm);
    let mut next_id = groups.len();
    let mut changed = false;
    for nodes in groups.iter().filter(|g| g.len() >= 2) {
        let tot: f64 = nodes.iter().map(|&u| base.strength[u]).sum();
        let Some((score, sides)) = bisector.best(base, nodes, two_m, rng, budget) else { break };
        if score > 1e-12 * two_m * tot {
            for (&u, &s) in nodes.iter().zip(&sides) {
                if s == 1 {
                    comm[u] = next_id;
                }
            }
            next_id += 1;
            changed = true;
        }
    }
    changed
}

/// For adjacent communities c and d, re-divides c ∪ d by the best of: the
/// current division, merging, and the best greedy bisection of the union.
/// Each community takes part in at most one change per pass.
fn pair_pass(
    base: &Level,
    comm: &mut [usize],
    two_m: f64,
    rng: &mut ChaCha8Rng,
    bisector: &mut Bisector,
    budget: &mut Budget,
) -> bool {
    if !budget.left() {
        return false;
    }
    budget.charge(comm.len());
    let groups = members(comm);
    let mut pairs = std::collections::BTreeSet::new();
    for u in 0..comm.len() {
        for &(v, _) in &base.adj[u] {
            let (a, b) = (comm[u], comm[v]);
            if a < b {
                pairs.insert((a, b));
            }
        }
    }
    let mut used = vec![false; groups.len()];
    let mut changed = false;
    for (c, d) in pairs {
        if used[c] || used[d] {
            continue;
        }
        let union: Vec<usize> = groups[c].iter().chain(&groups[d]).copied().collect();
        bisector.enter(&union);
        for &u in &union {
            bisector.side[u] = (comm[u] == d) as usize;
        }
        let current = bisector.score(base, &union, two_m);
        let Some((score, sides)) = bisector.best(base, &union, two_m, rng, budget) else { break };
        let tot: f64 = union.iter().map(|&u| base.strength[u]).sum();
        let eps = 1e-12 * two_m * tot;
        if score.max(0.0) <= current + eps {
            continue;
        }
        let merge = score <= 0.0;
        for (&u, &s) in union.iter().zip(&sides) {
            comm[u] = if s == 1 && !merge { d } else { c };
        }
        used[c] = true;
        used[d] = true;
        changed = true;
    }
    changed
}

/// Upper bound on kicks per pass.
const KICKS: usize = 4096;

#[derive(Clone, Copy)]
enum Kick {
    /// Move a node into a neighbouring community, or an empty one.
    Node(usize, Option<usize>),
    /// Move both ends of an edge into a new community.
    Pair(usize, usize),
    /// Send every member of a community to its best other community.
    Dissolve(usize),
}

/// Kicks: forces a node into another community, or dissolves a whole
/// community, lets the disturbance settle by local moving of the nodes it
/// reaches, and keeps the outcome only if modularity rose. Candidates are
/// every (node, neighbouring community) pair, every move to an empty
/// community, every edge moved as a pair into a new community and every
/// community, sampled down to `KICKS`. Returns whether any
/// kick was kept.
fn kick_pass(base: &Level, comm: &mut [usize], two_m: f64, rng: &mut ChaCha8Rng, budget: &mut Budget) -> bool {
    if !budget.left() {
        return false;
    }
    let n = base.len();
    budget.charge(n);
    let groups = members(comm);
    let mut candidates: Vec<Kick> = Vec::new();
    for u in 0..n {
        let mut near: Vec<usize> = base.adj[u].iter().map(|&(v, _)| comm[v]).filter(|&c| c != comm[u]).collect();
        near.sort_unstable();
        near.dedup();
        candidates.extend(near.into_iter().map(|c| Kick::Node(u, Some(c))));
        if groups[comm[u]].len() > 1 {
            candidates.push(Kick::Node(u, None));
        }
        candidates.extend(base.adj[u].iter().filter(|&&(v, _)| u < v).map(|&(v, _)| Kick::Pair(u, v)));
    }
    candidates.extend((0..groups.len()).filter(|&c| groups.len() > 1 && groups[c].len() > 1).map(Kick::Dissolve));
    candidates.shuffle(rng);
    candidates.truncate(KICKS);

    let mut moves = Moves::new(base, comm, two_m);
    let mut queued = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    let mut log: Vec<(usize, usize)> = Vec::new();
    let eps = 1e-12 * two_m * two_m;
    let mut kept = false;
    for kick in candidates {
        if !budget.left() {
            break;
        }
        log.clear();
        let mut total = 0.0;
        match kick {
            Kick::Node(u, to) => {
                let cu = moves.comm[u];
                let stale = match to {
                    Some(c) => c == cu || moves.size[c] == 0,
                    None => moves.size[cu] == 1,
                };
                if stale {
                    continue;
                }
                let (from, gain) = moves.force(u, to);
                total += gain;
                log.push((u, from));
            }
            Kick::Pair(u, v) => {
                let (from, gain) = moves.force(u, None);
                total += gain;
                log.push((u, from));
                let (from, gain) = moves.force(v, Some(moves.comm[u]));
                total += gain;
                log.push((v, from));
            }
            Kick::Dissolve(c) => {
                let mut nodes: Vec<usize> = groups[c].iter().copied().filter(|&u| moves.comm[u] == c).collect();
                if nodes.len() < 2 {
                    continue;
                }
                nodes.shuffle(rng);
                for u in nodes {
                    let (from, gain) = moves.evict(u);
                    total += gain;
                    log.push((u, from));
                }
            }
        }
        for i in 0..log.len() {
            for &(v, _) in &base.adj[log[i].0] {
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
        budget.charge(log.len());
        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            budget.charge(1);
            if let Some((from, gain)) = moves.improve(v) {
                total += gain;
                log.push((v, from));
                for &(x, _) in &base.adj[v] {
                    if !queued[x] {
                        queued[x] = true;
                        queue.push_back(x);
                    }
                }
            }
        }
        if total > eps {
            kept = true;
        } else {
            for &(v, from) in log.iter().rev() {
                moves.force(v, Some(from));
            }
        }
    }
    kept
}

/// Louvain clustering. Returns a dense community index per node.
///
/// A fixed number of restarts each run the two-phase multi-level
/// optimisation (local moves, then aggregation, with local moving repeated on
/// every level on the way back down). Restarts alternate between singleton
/// starts and starts from a recursive bisection of the whole graph. Each
/// restart is then refined for a few rounds: communities are bisected,
/// adjacent pairs re-divided, and kicks tried, after which the multi-level
/// phase runs again from the refined partition while modularity rises. The
/// restart with the highest modularity wins (earliest on ties).
///
/// Refinement draws on a node-visit allowance that covers small graphs
/// completely and grows linearly with graph size; once it is spent the
/// remaining restarts run the multi-level phase only. Every result ends with
/// local moving on the original graph, so no single-node relocation
/// increases modularity. All randomness comes from a generator seeded with
/// `seed`, so the result is a pure function of (graph, seed).
pub fn louvain(graph: &Undirected, seed: u64) -> Vec<usize> {
    let n = graph.node_count();
    let singletons: Vec<usize> = (0..n).collect();
    let two_m: f64 = graph.weights.iter().sum();
    if n == 0 || two_m <= 0.0 {
        return singletons;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Level::from_undirected(graph);
    let edges: usize = base.adj.iter().map(Vec::len).sum::<usize>() / 2;
    let mut budget = Budget(BASE_WORK + WORK_PER_ELEMENT * (n + edges) as u64);
    let mut bisector = Bisector::new(n);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..RESTARTS {
        let start = if restart % 2 == 1 && budget.left() {
            let mut start = vec![0; n];
            while split_pass(&base, &mut start, two_m, &mut rng, &mut bisector, &mut budget) {}
            start
        } else {
            singletons.clone()
        };
        let mut comm = multilevel(&base, &start, two_m, &mut rng);
        let mut q = modularity(graph, &comm);
        for _ in 0..REFINE_ROUNDS {
            if !budget.left() {
                break;
            }
            let mut refined = comm.clone();
            let split = split_pass(&base, &mut refined, two_m, &mut rng, &mut bisector, &mut budget);
            let paired = pair_pass(&base, &mut refined, two_m, &mut rng, &mut bisector, &mut budget);
            let kicked = kick_pass(&base, &mut refined, two_m, &mut rng, &mut budget);
            if !split && !paired && !kicked {
                break;
            }
            let refined = multilevel(&base, &refined, two_m, &mut rng);
            let rq = modularity(graph, &refined);
            if rq <= q + 1e-12 {
                break;
            }
            comm = refined;
            q = rq;
        }
        if best.as_ref().is_none_or(|(bq, _)| q > bq + 1e-12) {
            best = Some((q, comm));
        }
    }
    let mut membership = best.map(|(_, c)| c).unwrap_or(singletons);
    renumber(&mut membership);
    membership
}

/// A user-editable community label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityLabel {
    pub label_id: LabelId,
    pub name: String,
    pub created_in_batch: u64,
}

impl CommunityLabel {
    pub fn default_name(label_id: LabelId) -> String {
        format!("Community {label_id}")
    }
}

/// Every community label ever minted. Ids are never reused.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRegistry {
    labels: BTreeMap<LabelId, CommunityLabel>,
    next_id: LabelId,
}

impl LabelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mint(&mut self, batch_id: u64) -> LabelId {
        let id = self.next_id;
        self.next_id += 1;
        self.labels.insert(
            id,
            CommunityLabel {
                label_id: id,
                name: CommunityLabel::default_name(id),
                created_in_batch: batch_id,
            },
        );
        id
    }

    pub fn get(&self, id: LabelId) -> Option<&CommunityLabel> {
        self.labels.get(&id)
    }

    pub fn name(&self, id: LabelId) -> String {
        self.labels
            .get(&id)
            .map_or_else(|| CommunityLabel::default_name(id), |l| l.name.clone())
    }

    /// Renames an existing label. Returns false if the id is unknown.
    pub fn rename(&mut self, id: LabelId, name: &str) -> bool {
        match self.labels.get_mut(&id) {
            Some(l) => {
                l.name = name.to_string();
                true
            }
            None => false,
        }
    }

    pub fn next_id(&self) -> LabelId {
        self.next_id
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommunityLabel> {
        self.labels.values()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub(crate) fn from_parts(labels: Vec<CommunityLabel>, next_id: LabelId) -> Self {
        LabelRegistry {
            labels: labels.into_iter().map(|l| (l.label_id, l)).collect(),
            next_id,
        }
    }
}

/// User → community assignment with a label per community.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    users: Vec<UserId>,
    community: Vec<usize>,
    labels: Vec<LabelId>,
    pub modularity: f64,
    index: HashMap<UserId, usize>,
}

impl Partition {
    /// `community` must be dense (0..k) and `labels` must have length k.
    pub fn new(users: Vec<UserId>, community: Vec<usize>, labels: Vec<LabelId>, modularity: f64) -> Self {
        assert_eq!(users.len(), community.len());
        debug_assert!(community.iter().all(|&c| c < labels.len()));
        let index = users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        Partition {
            users,
            community,
            labels,
            modularity,
            index,
        }
    }

    pub fn empty() -> Self {
        Partition::new(Vec::new(), Vec::new(), Vec::new(), 0.0)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.labels.len()
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn communities(&self) -> &[usize] {
        &self.community
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn community_of(&self, user: &str) -> Option<usize> {
        self.index.get(user).map(|&i| self.community[i])
    }

    pub fn label_of(&self, user: &str) -> Option<LabelId> {
        self.community_of(user).map(|c| self.labels[c])
    }

    pub fn label(&self, community: usize) -> LabelId {
        self.labels[community]
    }

    pub fn community_with_label(&self, label: LabelId) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.labels.len()];
        for &c in &self.community {
            sizes[c] += 1;
        }
        sizes
    }

    /// Members of each community, in user order.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.labels.len()];
        for (u, &c) in self.users.iter().zip(&self.community) {
            out[c].push(u.as_str());
        }
        out
    }

    /// Text table: one `user_id community_index label_id` line per user.
    pub fn table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (u, &c) in self.users.iter().zip(&self.community) {
            let _ = writeln!(out, "{} {} {}", crate::graph::escape_field(u), c, self.labels[c]);
        }
        out
    }

    pub fn from_table(table: &str, modularity: f64) -> Result<Self, String> {
        let mut users = Vec::new();
        let mut community = Vec::new();
        let mut labels: BTreeMap<usize, LabelId> = BTreeMap::new();
        for (n, line) in table.lines().enumerate() {
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(format!("partition line {}: expected 3 fields", n + 1));
            }
            let c: usize = parts[1].parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            let l: LabelId = parts[2].parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            if *labels.entry(c).or_insert(l) != l {
                return Err(format!("line {}: community {c} has two labels", n + 1));
            }
            users.push(crate::graph::unescape_field(parts[0])?);
            community.push(c);
        }
        let k = labels.len();
        if labels.keys().copied().ne(0..k) {
            return Err("community indices are not dense".to_string());
        }
        Ok(Partition::new(users, community, labels.into_values().collect(), modularity))
    }
}

/// Clusters the graph and returns the unlabeled dense assignment and its modularity.
pub fn cluster(graph: &InteractionGraph, seed: u64) -> (Vec<usize>, f64) {
    let u = graph.undirected();
    let comm = louvain(&u, seed);
    let q = modularity(&u, &comm);
    (comm, q)
}

/// Maps freshly clustered communities onto the previous partition's labels.
///
/// For new community `n` and old community `o`,
/// `overlap = |n ∩ o| / |n ∩ old_universe|`. Candidate pairs are taken
/// greedily by overlap (ties: larger old community, lower old label id) and
/// `n` inherits `o`'s label iff the overlap exceeds `threshold` and neither
/// side is already matched. Unmatched new communities get fresh labels
/// created in `batch_id`.
pub fn match_communities(
    old: Option<&Partition>,
    users: Vec<UserId>,
    community: Vec<usize>,
    modularity: f64,
    threshold: f64,
    registry: &mut LabelRegistry,
    batch_id: u64,
) -> Partition {
    let k = community.iter().copied().max().map_or(0, |c| c + 1);
    let mut labels: Vec<Option<LabelId>> = vec![None; k];
    if let Some(old) = old {
        let old_sizes = old.sizes();
        let mut denom = vec![0u64; k];
        let mut inter: HashMap<(usize, usize), u64> = HashMap::new();
        for (u, &c) in users.iter().zip(&community) {
            if let Some(oc) = old.community_of(u) {
                denom[c] += 1;
                *inter.entry((c, oc)).or_insert(0) += 1;
            }
        }
        let mut pairs: Vec<(usize, usize, u64)> = inter.into_iter().map(|((c, o), x)| (c, o, x)).collect();
        pairs.sort_by(|&(c1, o1, x1), &(c2, o2, x2)| {
            // x1/d1 vs x2/d2 without rounding
            let lhs = x1 as u128 * denom[c2] as u128;
            let rhs = x2 as u128 * denom[c1] as u128;
            rhs.cmp(&lhs)
                .then(old_sizes[o2].cmp(&old_sizes[o1]))
                .then(old.label(o1).cmp(&old.label(o2)))
                .then(x2.cmp(&x1))
                .then(c1.cmp(&c2))
        });
        let mut old_taken = vec![false; old.community_count()];
        for (c, o, x) in pairs {
            let overlap = x as f64 / denom[c] as f64;
            if overlap <= threshold {
                break;
            }
            if labels[c].is_none() && !old_taken[o] {
                labels[c] = Some(old.label(o));
                old_taken[o] = true;
            }
        }
    }
    let labels = labels
        .into_iter()
        .map(|l| l.unwrap_or_else(|| registry.mint(batch_id)))
        .collect();
    Partition::new(users, community, labels, modularity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Undirected;

    fn two_triangles(bridge: bool) -> Undirected {
        let mut e = vec![
            (0, 1, 1.0),
            (1, 2, 1.0),
            (0, 2, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (3, 5, 1.0),
        ];
        if bridge {
            e.push((2, 3, 1.0));
        }
        Undirected::from_edges(6, &e)
    }

    /// Restricted-growth-string enumeration of all set partitions.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
            if i == n {
                out.push(cur.clone());
                return;
            }
            for c in 0..=max + 1 {
                if i == 0 && c > 0 {
                    break;
                }
                cur.push(c);
                rec(i + 1, n, cur, if i == 0 { 0 } else { max.max(c) }, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if n > 0 {
            rec(0, n, &mut Vec::new(), 0, &mut out);
        }
        out
    }

    /// Oracle modularity straight from the definition.
    fn q_definition(edges: &[(usize, usize, f64)], assignment: &[usize]) -> f64 {
        let m: f64 = edges.iter().map(|e| e.2).sum();
        let k = assignment.iter().max().unwrap() + 1;
        let mut e_c = vec![0.0; k];
        let mut d_c = vec![0.0; k];
        for &(a, b, w) in edges {
            d_c[assignment[a]] += w;
            d_c[assignment[b]] += w;
            if assignment[a] == assignment[b] {
                e_c[assignment[a]] += w;
            }
        }
        (0..k).map(|c| e_c[c] / m - (d_c[c] / (2.0 * m)).powi(2)).sum()
    }

    #[test]
    fn bell_numbers() {
        assert_eq!(all_partitions(6).len(), 203);
        assert_eq!(all_partitions(5).len(), 52);
    }

    #[test]
    fn modularity_examples() {
        let g = two_triangles(true);
        assert_eq!(modularity(&g, &[0; 6]), 0.0);
        assert_eq!(modularity(&g, &[0, 0, 0, 1, 1, 1]), 5.0 / 14.0);
        let g = two_triangles(false);
        assert_eq!(modularity(&g, &[0, 0, 0, 1, 1, 1]), 0.5);
        assert_eq!(modularity(&Undirected::from_edges(3, &[]), &[0, 1, 2]), 0.0);
    }

    #[test]
    fn modularity_matches_definition() {
        let edges = vec![(0, 1, 2.0), (1, 2, 1.0), (2, 3, 3.0), (3, 0, 1.0), (1, 3, 1.0)];
        let g = Undirected::from_edges(4, &edges);
        for p in all_partitions(4) {
            let a = modularity(&g, &p);
            let b = q_definition(&edges, &p);
            assert!((a - b).abs() < 1e-12, "{p:?}: {a} vs {b}");
        }
    }

    fn exhaustive_best(g: &Undirected) -> (f64, Vec<usize>) {
        all_partitions(g.node_count())
            .into_iter()
            .map(|p| (modularity(g, &p), p))
            .fold((f64::NEG_INFINITY, Vec::new()), |a, b| if b.0 > a.0 { b } else { a })
    }

    #[test]
    fn louvain_two_disconnected_triangles() {
        let g = two_triangles(false);
        let (best_q, best) = exhaustive_best(&g);
        assert_eq!(best, vec![0, 0, 0, 1, 1, 1]);
        for seed in 0..10 {
            let p = louvain(&g, seed);
            assert_eq!(p, vec![0, 0, 0, 1, 1, 1], "seed {seed}");
            assert_eq!(modularity(&g, &p), best_q);
        }
    }

    #[test]
    fn louvain_star_single_community() {
        let g = Undirected::from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        let (best_q, _) = exhaustive_best(&g);
        assert_eq!(best_q, 0.0);
        for seed in 0..10 {
            assert_eq!(louvain(&g, seed), vec![0; 5]);
        }
    }

    #[test]
    fn louvain_bridged_triangles() {
        let g = two_triangles(true);
        let (best_q, _) = exhaustive_best(&g);
        for seed in 0..10 {
            let p = louvain(&g, seed);
            assert_eq!(p, vec![0, 0, 0, 1, 1, 1]);
            assert_eq!(modularity(&g, &p), 5.0 / 14.0);
            assert_eq!(modularity(&g, &p), best_q);
        }
    }

    #[test]
    fn louvain_isolated_nodes_are_singletons() {
        let g = Undirected::from_edges(4, &[(0, 1, 1.0)]);
        let p = louvain(&g, 3);
        assert_eq!(p[0], p[1]);
        assert_ne!(p[2], p[3]);
        assert_ne!(p[2], p[0]);
    }

    #[test]
    fn louvain_deterministic_per_seed() {
        let edges: Vec<(usize, usize, f64)> = (0..60)
            .flat_map(|i| [(i, (i * 7 + 3) % 60, 1.0), (i, (i + 1) % 60, 2.0)])
            .collect();
        let g = Undirected::from_edges(60, &edges);
        assert_eq!(louvain(&g, 11), louvain(&g, 11));
    }

    /// Exhaustive single-move check against the modularity function.
    pub(crate) fn assert_move_stable(g: &Undirected, p: &[usize]) {
        let q = modularity(g, p);
        let k = p.iter().max().map_or(0, |c| c + 1);
        for u in 0..g.node_count() {
            let targets: Vec<usize> = g.neighbors(u).map(|(v, _)| p[v]).chain([k]).collect();
            for c in targets {
                if c == p[u] {
                    continue;
                }
                let mut moved = p.to_vec();
                moved[u] = c;
                let dq = modularity(g, &moved) - q;
                assert!(dq <= 1e-12, "moving {u} to {c} gains {dq}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
            (2usize..40).prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::collection::vec((0..n, 0..n, 1u32..5), 1..(3 * n)),
                )
                    .prop_map(|(n, e)| {
                        (n, e.into_iter().map(|(a, b, w)| (a, b, w as f64)).collect())
                    })
            })
        }

        proptest! {
            #[test]
            fn move_stable_and_nonnegative((n, edges) in arb_graph(), seed in any::<u64>()) {
                let g = Undirected::from_edges(n, &edges);
                let p = louvain(&g, seed);
                assert_move_stable(&g, &p);
                if g.total_weight() > 0.0 {
                    prop_assert!(modularity(&g, &p) >= -1e-12);
                }
            }

            #[test]
            fn scale_invariant((n, edges) in arb_graph(), seed in any::<u64>(), scale in 2u32..100) {
                let g = Undirected::from_edges(n, &edges);
                let scaled: Vec<_> = edges.iter().map(|&(a, b, w)| (a, b, w * scale as f64)).collect();
                let gs = Undirected::from_edges(n, &scaled);
                prop_assert_eq!(louvain(&g, seed), louvain(&gs, seed));
            }

            #[test]
            fn matching_is_one_to_one(
                old_c in proptest::collection::vec(0usize..5, 1..60),
                new_c in proptest::collection::vec(0usize..5, 1..60),
                threshold in 0.05f64..1.0,
            ) {
                let mut reg = LabelRegistry::new();
                let mut oc = old_c.clone();
                renumber(&mut oc);
                let users: Vec<String> = (0..oc.len()).map(|i| format!("u{i}")).collect();
                let k = oc.iter().max().unwrap() + 1;
                let old_labels: Vec<_> = (0..k).map(|_| reg.mint(1)).collect();
                let old = Partition::new(users, oc, old_labels, 0.0);
                let names_before: Vec<_> = reg.iter().cloned().collect();
                let mut nc = new_c.clone();
                renumber(&mut nc);
                let new_users: Vec<String> = (0..nc.len()).map(|i| format!("u{}", i + 3)).collect();
                let p = match_communities(Some(&old), new_users, nc, 0.0, threshold, &mut reg, 2);
                let mut seen = std::collections::HashSet::new();
                for &l in p.labels() {
                    prop_assert!(seen.insert(l), "label {} assigned twice", l);
                }
                for l in &names_before {
                    prop_assert_eq!(reg.get(l.label_id).unwrap(), l);
                }
            }
        }
    }

    fn part(users: &[&str], comm: &[usize], reg: &mut LabelRegistry) -> Partition {
        let k = comm.iter().max().unwrap() + 1;
        let labels = (0..k).map(|_| reg.mint(1)).collect();
        Partition::new(users.iter().map(|s| s.to_string()).collect(), comm.to_vec(), labels, 0.0)
    }

    #[test]
    fn identical_partition_keeps_labels() {
        let mut reg = LabelRegistry::new();
        let users = ["a", "b", "c", "d"];
        let old = part(&users, &[0, 0, 1, 1], &mut reg);
        let p = match_communities(
            Some(&old),
            users.iter().map(|s| s.to_string()).collect(),
            vec![0, 0, 1, 1],
            0.0,
            DEFAULT_THRESHOLD,
            &mut reg,
            2,
        );
        assert_eq!(p.labels(), old.labels());
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn overlap_uses_previously_seen_members() {
        // new community of 10 users, 8 seen before, 6 of them in old label A
        let mut reg = LabelRegistry::new();
        let old_users: Vec<String> = (0..8).map(|i| format!("s{i}")).chain((0..4).map(|i| format!("o{i}"))).collect();
        let old_comm: Vec<usize> = (0..12).map(|i| if i < 6 { 0 } else { 1 }).collect();
        let refs: Vec<&str> = old_users.iter().map(String::as_str).collect();
        let old = part(&refs, &old_comm, &mut reg);
        let a = old.label(0);
        let new_users: Vec<String> = (0..8).map(|i| format!("s{i}")).chain(["n0".into(), "n1".into()]).collect();
        let p = match_communities(Some(&old), new_users, vec![0; 10], 0.0, 0.5, &mut reg, 2);
        assert_eq!(p.label(0), a);
    }

    #[test]
    fn all_new_users_get_fresh_label() {
        let mut reg = LabelRegistry::new();
        let old = part(&["a", "b"], &[0, 0], &mut reg);
        let p = match_communities(
            Some(&old),
            vec!["x".into(), "y".into(), "a".into(), "b".into()],
            vec![0, 0, 1, 1],
            0.0,
            0.5,
            &mut reg,
            7,
        );
        let fresh = p.label(0);
        assert_ne!(fresh, old.label(0));
        assert_eq!(reg.get(fresh).unwrap().created_in_batch, 7);
        assert_eq!(p.label(1), old.label(0));
    }

    #[test]
    fn threshold_is_strict() {
        let mut reg = LabelRegistry::new();
        let old = part(&["a", "b", "c", "d"], &[0, 0, 1, 1], &mut reg);
        // {a, c}: overlap 0.5 with both, not > 0.5
        let p = match_communities(
            Some(&old),
            vec!["a".into(), "c".into(), "b".into(), "d".into()],
            vec![0, 0, 1, 1],
            0.0,
            0.5,
            &mut reg,
            2,
        );
        assert!(p.labels().iter().all(|l| *l >= 2));
    }

    #[test]
    fn partition_table_round_trip() {
        let mut reg = LabelRegistry::new();
        let p = part(&["a b", "c", "d"], &[0, 1, 0], &mut reg);
        let back = Partition::from_table(&p.table(), 0.0).unwrap();
        assert_eq!(back, p);
    }
}
