//! Enumeration of small graphs up to isomorphism, and a brute-force
//! modularity oracle over every set partition.

use std::collections::HashSet;

/// Simple undirected graph on at most 8 nodes as adjacency bitmasks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SmallGraph {
    pub n: usize,
    pub adj: Vec<u8>,
}

impl SmallGraph {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adj[i] >> j & 1 == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = 1u8;
        let mut frontier = 1u8;
        while frontier != 0 {
            let mut next = 0u8;
            for i in 0..self.n {
                if frontier >> i & 1 == 1 {
                    next |= self.adj[i];
                }
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen.count_ones() as usize == self.n
    }

    /// Upper-triangle adjacency bits under the node order `perm`.
    fn code(&self, perm: &[usize]) -> u32 {
        let mut c = 0u32;
        for i in 0..self.n {
            for j in i + 1..self.n {
                c <<= 1;
                if self.adj[perm[i]] >> perm[j] & 1 == 1 {
                    c |= 1;
                }
            }
        }
        c
    }

    /// Ordered cells from colour refinement. The order depends only on the
    /// isomorphism class, so minimizing the code over orders that respect
    /// the cells gives a canonical form.
    fn cells(&self) -> Vec<Vec<usize>> {
        let mut colour: Vec<usize> = (0..self.n).map(|i| self.adj[i].count_ones() as usize).collect();
        loop {
            let sig: Vec<(usize, Vec<usize>)> = (0..self.n)
                .map(|i| {
                    let mut nb: Vec<usize> = (0..self.n).filter(|&j| self.adj[i] >> j & 1 == 1).map(|j| colour[j]).collect();
                    nb.sort_unstable();
                    (colour[i], nb)
                })
                .collect();
            let mut distinct = sig.clone();
            distinct.sort();
            distinct.dedup();
            let next: Vec<usize> = sig.iter().map(|s| distinct.binary_search(s).unwrap()).collect();
            let before = colour.iter().collect::<HashSet<_>>().len();
            let after = distinct.len();
            colour = next;
            if after == before {
                break;
            }
        }
        let k = colour.iter().max().map_or(0, |m| m + 1);
        let mut cells = vec![Vec::new(); k];
        for (i, &c) in colour.iter().enumerate() {
            cells[c].push(i);
        }
        cells.retain(|c| !c.is_empty());
        cells
    }

    pub fn canonical(&self) -> u32 {
        let cells = self.cells();
        let mut best = u32::MAX;
        let mut perm = Vec::with_capacity(self.n);
        fn rec(g: &SmallGraph, cells: &[Vec<usize>], ci: usize, used: &mut Vec<bool>, perm: &mut Vec<usize>, best: &mut u32) {
            if ci == cells.len() {
                *best = (*best).min(g.code(perm));
                return;
            }
            let cell = &cells[ci];
            let placed = cell.iter().filter(|&&v| used[v]).count();
            if placed == cell.len() {
                return rec(g, cells, ci + 1, used, perm, best);
            }
            for &v in cell {
                if !used[v] {
                    used[v] = true;
                    perm.push(v);
                    rec(g, cells, ci, used, perm, best);
                    perm.pop();
                    used[v] = false;
                }
            }
        }
        let mut used = vec![false; self.n];
        rec(self, &cells, 0, &mut used, &mut perm, &mut best);
        best
    }
}

/// All graphs on `n` nodes up to isomorphism, for n = 1..=max_n, built by
/// attaching a new node to every class of the previous size in every way.
pub fn all_graphs(max_n: usize) -> Vec<Vec<SmallGraph>> {
    assert!((1..=8).contains(&max_n));
    let mut levels = vec![vec![SmallGraph { n: 1, adj: vec![0] }]];
    for n in 2..=max_n {
        let mut seen = HashSet::new();
        let mut level = Vec::new();
        for g in levels.last().unwrap() {
            for mask in 0u16..(1 << (n - 1)) {
                let mut adj = g.adj.clone();
                adj.push(mask as u8);
                for (i, a) in adj.iter_mut().enumerate().take(n - 1) {
                    if mask >> i & 1 == 1 {
                        *a |= 1 << (n - 1);
                    }
                }
                let h = SmallGraph { n, adj };
                if seen.insert(h.canonical()) {
                    level.push(h);
                }
            }
        }
        levels.push(level);
    }
    levels
}

/// Modularity from the definition Q = (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j).
pub fn modularity(g: &SmallGraph, assignment: &[usize]) -> f64 {
    let m = g.edges().len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k: Vec<f64> = g.adj.iter().map(|a| a.count_ones() as f64).collect();
    let mut q = 0.0;
    for i in 0..g.n {
        for j in 0..g.n {
            if assignment[i] == assignment[j] {
                let a = (g.adj[i] >> j & 1) as f64;
                q += a - k[i] * k[j] / (2.0 * m);
            }
        }
    }
    q / (2.0 * m)
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max {
            cur.push(c);
            rec(i + 1, n, cur, if c == max { max + 1 } else { max }, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// Largest modularity over all partitions.
pub fn optimal_modularity(g: &SmallGraph, partitions: &[Vec<usize>]) -> f64 {
    partitions.iter().map(|p| modularity(g, p)).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest modularity gain available by moving one node into a community
/// holding one of its neighbours.
pub fn best_single_move_gain(g: &SmallGraph, assignment: &[usize]) -> f64 {
    let base = modularity(g, assignment);
    let mut best = f64::NEG_INFINITY;
    let mut moved = assignment.to_vec();
    for u in 0..g.n {
        for v in 0..g.n {
            if g.adj[u] >> v & 1 == 1 && assignment[v] != assignment[u] {
                moved[u] = assignment[v];
                best = best.max(modularity(g, &moved) - base);
                moved[u] = assignment[u];
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts_up_to_seven() {
        let levels = all_graphs(7);
        let all: Vec<usize> = levels.iter().map(Vec::len).collect();
        assert_eq!(all, vec![1, 2, 4, 11, 34, 156, 1044]);
        let connected: Vec<usize> = levels.iter().map(|l| l.iter().filter(|g| g.is_connected()).count()).collect();
        assert_eq!(connected, vec![1, 1, 2, 6, 21, 112, 853]);
    }

    #[test]
    fn canonical_form_ignores_labelling() {
        let path = SmallGraph { n: 3, adj: vec![0b010, 0b101, 0b010] };
        let relabelled = SmallGraph { n: 3, adj: vec![0b100, 0b100, 0b011] };
        let triangle = SmallGraph { n: 3, adj: vec![0b110, 0b101, 0b011] };
        assert_eq!(path.canonical(), relabelled.canonical());
        assert_ne!(path.canonical(), triangle.canonical());
    }

    #[test]
    fn bell_numbers() {
        let b: Vec<usize> = (1..=8).map(|n| set_partitions(n).len()).collect();
        assert_eq!(b, vec![1, 2, 5, 15, 52, 203, 877, 4140]);
    }
}
