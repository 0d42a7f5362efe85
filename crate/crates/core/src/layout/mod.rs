//! ForceAtlas2 layout with Barnes-Hut repulsion and warm starts.
//!
//! Force laws, with node mass `m(u) = deg(u) + 1` (weighted degree):
//!
//! * attraction along each edge: `w_uv · d(u, v)`
//! * repulsion between every pair: `k_r · m(u) · m(v) / d(u, v)`
//! * gravity toward the origin: `k_g · m(u)`
//!
//! Displacement uses the ForceAtlas2 adaptive global speed and per-node
//! swing damping.

mod quadtree;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use quadtree::{repulsion_barnes_hut, repulsion_exact, QuadTree};

use crate::graph::{escape_field, unescape_field, InteractionGraph, Undirected};
use crate::model::UserId;
use crate::par::Execution;

/// Half-width of the export viewport.
pub const VIEWPORT: f64 = 1000.0;

const MIN_GLOBAL_SPEED: f64 = 1e-12;
const MAX_SPEED_EFFICIENCY: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub k_repulsion: f64,
    pub k_gravity: f64,
    /// Barnes-Hut opening angle, in (0, 1].
    pub theta: f64,
    /// Exact O(n²) repulsion when false.
    pub barnes_hut: bool,
    pub iterations: u32,
    pub jitter_tolerance: f64,
    /// Upper bound on the relative increase of the global speed per step.
    pub max_speed_rise: f64,
    pub min_speed_efficiency: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            k_repulsion: 1.0,
            k_gravity: 0.05,
            theta: 0.5,
            barnes_hut: true,
            iterations: 300,
            jitter_tolerance: 1.0,
            max_speed_rise: 0.5,
            min_speed_efficiency: 0.05,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_repulsion > 0.0) {
            return Err("k_repulsion must be positive".into());
        }
        if !(self.k_gravity >= 0.0) {
            return Err("k_gravity must be non-negative".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err("theta must be in (0, 1]".into());
        }
        if self.iterations == 0 {
            return Err("iterations must be positive".into());
        }
        if !(self.jitter_tolerance > 0.0 && self.max_speed_rise > 0.0 && self.min_speed_efficiency > 0.0) {
            return Err("speed constants must be positive".into());
        }
        Ok(())
    }
}

/// Node positions plus the adaptive-speed memory needed to continue a run.
/// Vectors are aligned with the graph's node order.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutState {
    pub ids: Vec<UserId>,
    pub positions: Vec<[f64; 2]>,
    pub prev_forces: Vec<[f64; 2]>,
    pub global_speed: f64,
    pub speed_efficiency: f64,
    pub params: LayoutParams,
    pub rng_seed: u64,
    pub iterations_done: u64,
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    format_version: u32,
    global_speed: f64,
    speed_efficiency: f64,
    rng_seed: u64,
    iterations_done: u64,
    params: LayoutParams,
}

impl LayoutState {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position_of(&self, id: &str) -> Option<[f64; 2]> {
        self.ids.iter().position(|u| u == id).map(|i| self.positions[i])
    }

    pub fn lookup(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect()
    }

    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        bounds(&self.positions)
    }

    /// Largest side of the bounding box.
    pub fn diameter(&self) -> f64 {
        self.bounds().map_or(0.0, |(a, b, c, d)| (c - a).max(d - b))
    }

    /// Positions rescaled uniformly into the `[-1000, 1000]` viewport, centred.
    pub fn viewport_positions(&self) -> Vec<[f64; 2]> {
        let Some((x0, y0, x1, y1)) = self.bounds() else {
            return Vec::new();
        };
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let half = ((x1 - x0).max(y1 - y0)) / 2.0;
        let scale = if half > 0.0 { VIEWPORT / half } else { 1.0 };
        self.positions
            .iter()
            .map(|p| [(p[0] - cx) * scale, (p[1] - cy) * scale])
            .collect()
    }

    /// Lossless text form: a JSON header line, then `id x y fx fy` per node.
    pub fn to_text(&self) -> String {
        let header = StateHeader {
            format_version: 1,
            global_speed: self.global_speed,
            speed_efficiency: self.speed_efficiency,
            rng_seed: self.rng_seed,
            iterations_done: self.iterations_done,
            params: self.params.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for i in 0..self.ids.len() {
            let p = self.positions[i];
            let f = self.prev_forces[i];
            let _ = writeln!(out, "{} {:?} {:?} {:?} {:?}", escape_field(&self.ids[i]), p[0], p[1], f[0], f[1]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: StateHeader = serde_json::from_str(lines.next().ok_or("missing header")?)
            .map_err(|e| format!("layout header: {e}"))?;
        if header.format_version != 1 {
            return Err(format!("unsupported layout format {}", header.format_version));
        }
        let mut st = LayoutState {
            ids: Vec::new(),
            positions: Vec::new(),
            prev_forces: Vec::new(),
            global_speed: header.global_speed,
            speed_efficiency: header.speed_efficiency,
            params: header.params,
            rng_seed: header.rng_seed,
            iterations_done: header.iterations_done,
        };
        for (n, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 5 {
                return Err(format!("layout line {}: expected 5 fields", n + 2));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("layout line {}: {e}", n + 2));
            st.ids.push(unescape_field(parts[0])?);
            st.positions.push([num(parts[1])?, num(parts[2])?]);
            st.prev_forces.push([num(parts[3])?, num(parts[4])?]);
        }
        Ok(st)
    }
}

fn bounds(points: &[[f64; 2]]) -> Option<(f64, f64, f64, f64)> {
    let first = points.first()?;
    Some(points.iter().fold(
        (first[0], first[1], first[0], first[1]),
        |(a, b, c, d), p| (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1])),
    ))
}

/// Initial state for `graph`: nodes known to `prior` keep their exact
/// coordinates; new nodes are placed uniformly in the prior's bounding box, or
/// in the unit disk without a prior.
pub fn init_layout(
    graph: &InteractionGraph,
    prior: Option<&LayoutState>,
    seed: u64,
    params: LayoutParams,
) -> LayoutState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = prior.filter(|p| !p.is_empty());
    let known = prior.map(LayoutState::lookup).unwrap_or_default();
    let sample_box = prior.and_then(|p| p.bounds()).map(|(x0, y0, x1, y1)| {
        // a flat axis is widened so new nodes do not all land on one line
        let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        (pad(x0, x1), pad(y0, y1))
    });
    let n = graph.node_count();
    let mut positions = Vec::with_capacity(n);
    let mut prev_forces = Vec::with_capacity(n);
    for id in graph.ids() {
        match (prior, known.get(id.as_str())) {
            (Some(p), Some(&i)) => {
                positions.push(p.positions[i]);
                prev_forces.push(p.prev_forces[i]);
            }
            _ => {
                let pos = match sample_box {
                    Some(((x0, x1), (y0, y1))) => [rng.random_range(x0..x1), rng.random_range(y0..y1)],
                    None => {
                        let r = rng.random::<f64>().sqrt();
                        let a = rng.random::<f64>() * std::f64::consts::TAU;
                        [r * a.cos(), r * a.sin()]
                    }
                };
                positions.push(pos);
                prev_forces.push([0.0, 0.0]);
            }
        }
    }
    LayoutState {
        ids: graph.ids().to_vec(),
        positions,
        prev_forces,
        global_speed: prior.map_or(1.0, |p| p.global_speed),
        speed_efficiency: prior.map_or(1.0, |p| p.speed_efficiency),
        params,
        rng_seed: seed,
        iterations_done: 0,
    }
}

/// Precomputed adjacency and masses for repeated steps on one graph.
pub struct Stepper {
    adj: Undirected,
    masses: Vec<f64>,
    exec: Execution,
}

impl Stepper {
    pub fn new(graph: &InteractionGraph) -> Self {
        Self::from_undirected(graph.undirected())
    }

    pub fn from_undirected(adj: Undirected) -> Self {
        let masses = (0..adj.node_count()).map(|u| adj.strength(u) + 1.0).collect();
        Stepper {
            adj,
            masses,
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Net force on every node for the given positions.
    pub fn forces(&self, positions: &[[f64; 2]], params: &LayoutParams) -> Vec<[f64; 2]> {
        let mut forces = if params.barnes_hut {
            repulsion_barnes_hut(positions, &self.masses, params.k_repulsion, params.theta, self.exec)
        } else {
            repulsion_exact(positions, &self.masses, params.k_repulsion, self.exec)
        };
        let attraction = self.exec.map_range(positions.len(), |u| {
            let p = positions[u];
            let mut f = [0.0, 0.0];
            for (v, w) in self.adj.neighbors(u) {
                let q = positions[v];
                f[0] += w * (q[0] - p[0]);
                f[1] += w * (q[1] - p[1]);
            }
            f
        });
        for (u, f) in forces.iter_mut().enumerate() {
            f[0] += attraction[u][0];
            f[1] += attraction[u][1];
            let p = positions[u];
            let d = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if d > 0.0 && params.k_gravity > 0.0 {
                let g = params.k_gravity * self.masses[u] / d;
                f[0] -= g * p[0];
                f[1] -= g * p[1];
            }
        }
        forces
    }

    /// One ForceAtlas2 iteration.
    pub fn step(&self, state: &mut LayoutState) {
        assert_eq!(state.positions.len(), self.masses.len(), "layout state does not cover the graph");
        let n = state.positions.len();
        if n == 0 {
            return;
        }
        separate_coincident(state);
        let params = state.params.clone();
        let forces = self.forces(&state.positions, &params);

        let mut swinging = vec![0.0; n];
        let mut total_swinging = 0.0;
        let mut total_traction = 0.0;
        for u in 0..n {
            let (f, o) = (forces[u], state.prev_forces[u]);
            let m = self.masses[u];
            swinging[u] = m * ((f[0] - o[0]).powi(2) + (f[1] - o[1]).powi(2)).sqrt();
            total_swinging += swinging[u];
            total_traction += m * 0.5 * ((f[0] + o[0]).powi(2) + (f[1] + o[1]).powi(2)).sqrt();
        }

        let nf = n as f64;
        let estimated_jt = 0.05 * nf.sqrt();
        let min_jt = estimated_jt.sqrt();
        let max_jt: f64 = 10.0;
        let mut jt = params.jitter_tolerance
            * min_jt.max(max_jt.min(estimated_jt * total_traction / (nf * nf)));
        if total_traction > 0.0 && total_swinging / total_traction > 2.0 {
            if state.speed_efficiency > params.min_speed_efficiency {
                state.speed_efficiency *= 0.5;
            }
            jt = jt.max(params.jitter_tolerance);
        }
        if total_swinging > 0.0 || total_traction > 0.0 {
            let target = if total_swinging > 0.0 {
                jt * state.speed_efficiency * total_traction / total_swinging
            } else {
                f64::INFINITY
            };
            if total_swinging > jt * total_traction {
                if state.speed_efficiency > params.min_speed_efficiency {
                    state.speed_efficiency *= 0.7;
                }
            } else if state.global_speed < 1000.0 {
                state.speed_efficiency = (state.speed_efficiency * 1.3).min(MAX_SPEED_EFFICIENCY);
            }
            let rise = params.max_speed_rise * state.global_speed;
            state.global_speed = (state.global_speed + (target - state.global_speed).min(rise)).max(MIN_GLOBAL_SPEED);
        }

        let speed = state.global_speed;
        for u in 0..n {
            let factor = speed / (1.0 + (speed * swinging[u]).sqrt());
            state.positions[u][0] += forces[u][0] * factor;
            state.positions[u][1] += forces[u][1] * factor;
        }
        state.prev_forces = forces;
        state.iterations_done += 1;
    }

    /// Runs `iterations` steps.
    pub fn run(&self, state: &mut LayoutState, iterations: u32) {
        for _ in 0..iterations {
            self.step(state);
        }
    }
}

/// Moves every node that shares exact coordinates with an earlier node by a
/// seeded offset of `1e-6 ×` the layout diameter.
fn separate_coincident(state: &mut LayoutState) {
    let mut seen: HashMap<(u64, u64), usize> = HashMap::with_capacity(state.positions.len());
    let mut dupes = Vec::new();
    for (i, p) in state.positions.iter().enumerate() {
        let key = (p[0].to_bits(), p[1].to_bits());
        if seen.insert(key, i).is_some() {
            dupes.push(i);
        }
    }
    if dupes.is_empty() {
        return;
    }
    let diameter = state.diameter();
    let scale = 1e-6 * if diameter > 0.0 { diameter } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(
        state
            .rng_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(state.iterations_done),
    );
    for i in dupes {
        state.positions[i][0] += scale * rng.random_range(-1.0..1.0);
        state.positions[i][1] += scale * rng.random_range(-1.0..1.0);
    }
}

/// One iteration on `graph` (builds the adjacency each call; use [`Stepper`]
/// for repeated steps).
pub fn step(graph: &InteractionGraph, state: &mut LayoutState) {
    Stepper::new(graph).step(state);
}

/// Initializes from `prior` and runs `params.iterations` steps.
pub fn compute_layout(
    graph: &InteractionGraph,
    prior: Option<&LayoutState>,
    seed: u64,
    params: LayoutParams,
) -> LayoutState {
    let iterations = params.iterations;
    let mut state = init_layout(graph, prior, seed, params);
    Stepper::new(graph).run(&mut state, iterations);
    state
}

/// Export table: `user_id x y community_label degree` per node, viewport coordinates.
pub fn export_table(
    state: &LayoutState,
    graph: &InteractionGraph,
    label_of: impl Fn(&str) -> Option<u64>,
) -> String {
    let mut out = String::new();
    let view = state.viewport_positions();
    for (i, id) in state.ids.iter().enumerate() {
        let label = label_of(id).map_or_else(|| "-".to_string(), |l| l.to_string());
        let degree = graph.node_index(id).map_or(0, |n| graph.degree(n));
        let _ = writeln!(out, "{} {} {} {} {}", escape_field(id), view[i][0], view[i][1], label, degree);
    }
    out
}
