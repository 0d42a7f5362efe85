//! Barnes-Hut quadtree for the degree-weighted repulsion term.

use crate::par::Execution;

const NONE: u32 = u32::MAX;
const MAX_DEPTH: u32 = 48;

#[derive(Clone, Debug)]
struct Cell {
    cx: f64,
    cy: f64,
    half: f64,
    mass: f64,
    mx: f64,
    my: f64,
    children: [u32; 4],
    /// Body range into `QuadTree::order` for leaves.
    start: u32,
    end: u32,
}

impl Cell {
    fn is_leaf(&self) -> bool {
        self.children == [NONE; 4]
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).abs() <= self.half && (y - self.cy).abs() <= self.half
    }
}

/// Quadtree over point masses. Leaves hold one body, or several coincident
/// bodies once the depth limit is reached.
pub struct QuadTree<'a> {
    cells: Vec<Cell>,
    order: Vec<u32>,
    positions: &'a [[f64; 2]],
    masses: &'a [f64],
}

impl<'a> QuadTree<'a> {
    pub fn build(positions: &'a [[f64; 2]], masses: &'a [f64]) -> Self {
        assert_eq!(positions.len(), masses.len());
        let mut tree = QuadTree {
            cells: Vec::with_capacity(positions.len() * 2),
            order: (0..positions.len() as u32).collect(),
            positions,
            masses,
        };
        if positions.is_empty() {
            return tree;
        }
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in positions {
            lo_x = lo_x.min(p[0]);
            lo_y = lo_y.min(p[1]);
            hi_x = hi_x.max(p[0]);
            hi_y = hi_y.max(p[1]);
        }
        let half = ((hi_x - lo_x).max(hi_y - lo_y) / 2.0).max(f64::MIN_POSITIVE) * (1.0 + 1e-9);
        let mut scratch = vec![0u32; positions.len()];
        tree.build_cell(
            0,
            positions.len(),
            (lo_x + hi_x) / 2.0,
            (lo_y + hi_y) / 2.0,
            half,
            0,
            &mut scratch,
        );
        tree
    }

    fn quadrant(&self, body: u32, cx: f64, cy: f64) -> usize {
        let p = self.positions[body as usize];
        (p[0] >= cx) as usize | (((p[1] >= cy) as usize) << 1)
    }

    fn build_cell(
        &mut self,
        start: usize,
        end: usize,
        cx: f64,
        cy: f64,
        half: f64,
        depth: u32,
        scratch: &mut [u32],
    ) -> u32 {
        let id = self.cells.len() as u32;
        self.cells.push(Cell {
            cx,
            cy,
            half,
            mass: 0.0,
            mx: 0.0,
            my: 0.0,
            children: [NONE; 4],
            start: start as u32,
            end: end as u32,
        });
        if end - start > 1 && depth < MAX_DEPTH {
            // stable counting sort of the range into quadrants
            let mut counts = [0usize; 4];
            for &b in &self.order[start..end] {
                counts[self.quadrant(b, cx, cy)] += 1;
            }
            let mut offsets = [start, 0, 0, 0];
            for q in 1..4 {
                offsets[q] = offsets[q - 1] + counts[q - 1];
            }
            let bounds = offsets;
            for i in start..end {
                let b = self.order[i];
                let q = self.quadrant(b, cx, cy);
                scratch[offsets[q]] = b;
                offsets[q] += 1;
            }
            self.order[start..end].copy_from_slice(&scratch[start..end]);
            let h = half / 2.0;
            for q in 0..4 {
                let (s, e) = (bounds[q], bounds[q] + counts[q]);
                if s == e {
                    continue;
                }
                let qx = if q & 1 == 1 { cx + h } else { cx - h };
                let qy = if q & 2 == 2 { cy + h } else { cy - h };
                let child = self.build_cell(s, e, qx, qy, h, depth + 1, scratch);
                self.cells[id as usize].children[q] = child;
            }
        }
        let (mut mass, mut mx, mut my) = (0.0, 0.0, 0.0);
        let cell = &self.cells[id as usize];
        if cell.is_leaf() {
            for &b in &self.order[start..end] {
                let m = self.masses[b as usize];
                let p = self.positions[b as usize];
                mass += m;
                mx += m * p[0];
                my += m * p[1];
            }
        } else {
            for &c in cell.children.iter().filter(|&&c| c != NONE) {
                let child = &self.cells[c as usize];
                mass += child.mass;
                mx += child.mass * child.mx;
                my += child.mass * child.my;
            }
        }
        let cell = &mut self.cells[id as usize];
        cell.mass = mass;
        if mass > 0.0 {
            cell.mx = mx / mass;
            cell.my = my / mass;
        } else {
            cell.mx = cx;
            cell.my = cy;
        }
        id
    }

    /// Approximate repulsion on body `i`: `k · m_i · m_j · (p_i − p_j) / d²`
    /// summed over bodies, with far cells (`size / d < theta`) collapsed to
    /// their centre of mass.
    pub fn force_on(&self, i: usize, k: f64, theta: f64) -> [f64; 2] {
        let mut f = [0.0, 0.0];
        if self.cells.is_empty() {
            return f;
        }
        let p = self.positions[i];
        let mi = self.masses[i];
        // depth is bounded, and each level leaves at most three siblings behind
        let mut stack = [0u32; 4 * MAX_DEPTH as usize + 4];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let cell = &self.cells[stack[top] as usize];
            if cell.is_leaf() {
                for &b in &self.order[cell.start as usize..cell.end as usize] {
                    let b = b as usize;
                    if b == i {
                        continue;
                    }
                    let q = self.positions[b];
                    add_pair(&mut f, p, q, k * mi * self.masses[b]);
                }
                continue;
            }
            let dx = p[0] - cell.mx;
            let dy = p[1] - cell.my;
            let d2 = dx * dx + dy * dy;
            let size = 2.0 * cell.half;
            if !cell.contains(p[0], p[1]) && size * size < theta * theta * d2 {
                add_pair(&mut f, p, [cell.mx, cell.my], k * mi * cell.mass);
            } else {
                for &child in cell.children.iter().rev() {
                    if child != NONE {
                        stack[top] = child;
                        top += 1;
                    }
                }
            }
        }
        f
    }
}

#[inline]
fn add_pair(f: &mut [f64; 2], p: [f64; 2], q: [f64; 2], coef: f64) {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let d2 = dx * dx + dy * dy;
    if d2 > 0.0 {
        let s = coef / d2;
        f[0] += s * dx;
        f[1] += s * dy;
    }
}

/// Exact pairwise repulsion, O(n²).
pub fn repulsion_exact(
    positions: &[[f64; 2]],
    masses: &[f64],
    k: f64,
    exec: Execution,
) -> Vec<[f64; 2]> {
    exec.map_range(positions.len(), |i| {
        let mut f = [0.0, 0.0];
        let p = positions[i];
        for (j, (&q, &mj)) in positions.iter().zip(masses).enumerate() {
            if j != i {
                add_pair(&mut f, p, q, k * masses[i] * mj);
            }
        }
        f
    })
}

/// Quadtree-approximated repulsion for every body.
pub fn repulsion_barnes_hut(
    positions: &[[f64; 2]],
    masses: &[f64],
    k: f64,
    theta: f64,
    exec: Execution,
) -> Vec<[f64; 2]> {
    let tree = QuadTree::build(positions, masses);
    // tree order keeps neighbouring bodies, and the cells they open, together in cache
    let in_tree_order = exec.map_slice(&tree.order, |&i| tree.force_on(i as usize, k, theta));
    let mut out = vec![[0.0, 0.0]; positions.len()];
    for (&i, f) in tree.order.iter().zip(in_tree_order) {
        out[i as usize] = f;
    }
    out
}
