//! The coarse planning graph: square cells of side √2·r laid over the
//! traversable space, one node per cell that contains traversable space,
//! edges between touching cells whose node points see each other.

use std::collections::VecDeque;

use coverage_core::gridworld::disk_stencil;
use coverage_core::{GridSpec, TaskProfile, WorldMap};

use crate::astar::{astar, for_each_move, GridGraph, NEIGHBORS};

/// Extra clearance, in fine cells, added to the agent radius so that a fine
/// cell being traversable means every point inside it is collision-free.
pub const CLEARANCE_MARGIN: f64 = 0.75;

/// Fine-grid clearance against a growing obstacle set.
#[derive(Debug, Clone)]
pub struct ClearanceMap {
    pub spec: GridSpec,
    stencil: Vec<(i64, i64)>,
    clear: Vec<bool>,
}

impl ClearanceMap {
    /// Everything clear; obstacles are added with [`ClearanceMap::add_obstacle`].
    pub fn open(spec: GridSpec, agent_radius: f64) -> Self {
        let radius = agent_radius + CLEARANCE_MARGIN * spec.resolution;
        Self { spec, stencil: disk_stencil(radius, spec.resolution), clear: vec![true; spec.len()] }
    }

    /// A precomputed clearance mask, `true` = clear.
    pub fn from_mask(spec: GridSpec, agent_radius: f64, clear: Vec<bool>) -> Self {
        assert_eq!(clear.len(), spec.len(), "clearance mask size");
        let radius = agent_radius + CLEARANCE_MARGIN * spec.resolution;
        Self { spec, stencil: disk_stencil(radius, spec.resolution), clear }
    }

    pub fn from_world(world: &WorldMap, agent_radius: f64) -> Self {
        let mut map = Self::open(world.spec, agent_radius);
        for (idx, obstacle) in world.cells().iter().enumerate() {
            if *obstacle {
                map.add_obstacle(idx);
            }
        }
        map
    }

    pub fn add_obstacle(&mut self, idx: usize) {
        let s = self.spec;
        let (i, j) = s.cell_from_index(idx);
        for &(di, dj) in &self.stencil {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if s.in_bounds(ni, nj) {
                self.clear[s.index(ni as usize, nj as usize)] = false;
            }
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.clear
    }

    pub fn is_clear(&self, x: f64, y: f64) -> bool {
        self.spec.cell_of(x, y).is_some_and(|(i, j)| self.clear[self.spec.index(i, j)])
    }

    /// True if every sample along the segment lies in a clear cell. The first
    /// point is not checked: it is where the agent already stands. An agent
    /// standing inside the safety margin may leave it: unclear samples are
    /// accepted until the first clear one, within two cells of the start.
    pub fn segment_clear(&self, from: (f64, f64), to: (f64, f64)) -> bool {
        let len = (to.0 - from.0).hypot(to.1 - from.1);
        let n = (len / (0.25 * self.spec.resolution)).ceil().max(1.0) as usize;
        let leave = 2.0 * self.spec.resolution;
        let mut leaving = true;
        (1..=n).all(|k| {
            let t = k as f64 / n as f64;
            let clear = self.is_clear(from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1));
            leaving &= !clear && t * len <= leave;
            clear || leaving
        })
    }
}

/// Coverage radius the planners rely on: long-range sensors are capped at a
/// few agent radii, since occlusion makes their far reach unreliable and
/// cells of sensor size would no longer be comparable to the agent.
pub fn working_radius(profile: &TaskProfile) -> f64 {
    profile.coverage_radius.min(4.0 * profile.agent_radius)
}

/// Radius of the band one straight drive is guaranteed to cover, used as the
/// cell half-diagonal. Coverage is applied at step endpoints `v_max·dt` apart,
/// and a sector narrower than a full circle only reaches forward.
pub fn planning_radius(profile: &TaskProfile) -> f64 {
    let d = working_radius(profile);
    let step = profile.v_max * profile.dt;
    let full_circle = profile.coverage_fov() >= std::f64::consts::TAU - 1e-9;
    let gap = if full_circle { step / 2.0 } else { step };
    if gap < d {
        (d * d - gap * gap).sqrt()
    } else {
        d / 2.0
    }
}

/// Side of a planning cell: the cell half-diagonal equals the planning radius.
pub fn cell_side(profile: &TaskProfile) -> f64 {
    std::f64::consts::SQRT_2 * planning_radius(profile)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    /// Coarse cell coordinates.
    pub cell: (usize, usize),
    /// Fine cell the node point sits on.
    pub fine: usize,
    /// Node point in world coordinates: the usable fine cell center nearest
    /// the coarse cell center.
    pub point: (f64, f64),
}

const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct CellGraph {
    pub side: f64,
    /// World position of the lower-left corner of coarse cell (0, 0).
    pub origin: [f64; 2],
    pub cols: usize,
    pub rows: usize,
    pub nodes: Vec<GraphNode>,
    node_at: Vec<u32>,
    /// Per coarse cell, bit k allows the move `NEIGHBORS[k]`.
    moves: Vec<u8>,
}

/// Lattice placement of a [`CellGraph`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lattice {
    /// Aligned to the bounding box of the usable fine cells.
    BoundingBox,
    /// Aligned so that the given point is a coarse cell center, spanning the whole grid.
    CenteredOn(f64, f64),
}

impl CellGraph {
    /// Builds the graph. `usable` marks fine cells that may hold a node
    /// point; `clearance` decides whether the segment between two node points
    /// is drivable.
    pub fn build(clearance: &ClearanceMap, usable: &[bool], side: f64, lattice: Lattice) -> Self {
        let s = clearance.spec;
        assert_eq!(usable.len(), s.len(), "usable mask size");
        assert!(side > 0.0, "cell side must be positive");
        let (origin, cols, rows) = match lattice {
            Lattice::BoundingBox => {
                let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
                for (idx, _) in usable.iter().enumerate().filter(|(_, u)| **u) {
                    let (i, j) = s.cell_from_index(idx);
                    (i0, j0, i1, j1) = (i0.min(i), j0.min(j), i1.max(i), j1.max(j));
                }
                if i0 == usize::MAX {
                    return Self { side, origin: s.origin, cols: 0, rows: 0, nodes: vec![], node_at: vec![], moves: vec![] };
                }
                let origin = [s.origin[0] + i0 as f64 * s.resolution, s.origin[1] + j0 as f64 * s.resolution];
                let cols = (((i1 + 1 - i0) as f64 * s.resolution) / side - 1e-9).ceil() as usize;
                let rows = (((j1 + 1 - j0) as f64 * s.resolution) / side - 1e-9).ceil() as usize;
                (origin, cols.max(1), rows.max(1))
            }
            Lattice::CenteredOn(x, y) => {
                let (wx0, wy0) = (s.origin[0], s.origin[1]);
                // enough whole cells below the point to reach the grid origin
                let kx = ((x - side / 2.0 - wx0) / side).ceil();
                let ky = ((y - side / 2.0 - wy0) / side).ceil();
                let origin = [x - side / 2.0 - kx * side, y - side / 2.0 - ky * side];
                let cols = ((wx0 + s.world_width() - origin[0]) / side).ceil() as usize;
                let rows = ((wy0 + s.world_height() - origin[1]) / side).ceil() as usize;
                (origin, cols, rows)
            }
        };
        let mut best: Vec<Option<(f64, usize)>> = vec![None; cols * rows];
        for (idx, _) in usable.iter().enumerate().filter(|(_, u)| **u) {
            let (i, j) = s.cell_from_index(idx);
            let (x, y) = s.cell_center(i as i64, j as i64);
            let (ci, cj) = (((x - origin[0]) / side).floor(), ((y - origin[1]) / side).floor());
            if ci < 0.0 || cj < 0.0 || ci as usize >= cols || cj as usize >= rows {
                continue;
            }
            let (ci, cj) = (ci as usize, cj as usize);
            let (cx, cy) = (origin[0] + (ci as f64 + 0.5) * side, origin[1] + (cj as f64 + 0.5) * side);
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            let slot = &mut best[cj * cols + ci];
            // strict comparison: ties keep the smaller fine index
            if slot.is_none_or(|(bd, _)| d2 < bd) {
                *slot = Some((d2, idx));
            }
        }
        let mut nodes = Vec::new();
        let mut node_at = vec![NO_NODE; cols * rows];
        for (c, b) in best.iter().enumerate() {
            if let Some((_, fine)) = b {
                let (fi, fj) = s.cell_from_index(*fine);
                node_at[c] = nodes.len() as u32;
                nodes.push(GraphNode { cell: (c % cols, c / cols), fine: *fine, point: s.cell_center(fi as i64, fj as i64) });
            }
        }
        let mut graph = Self { side, origin, cols, rows, nodes, node_at, moves: vec![0; cols * rows] };
        for n in 0..graph.nodes.len() {
            let (ci, cj) = graph.nodes[n].cell;
            let mut bits = 0u8;
            for (k, (di, dj)) in NEIGHBORS.iter().enumerate() {
                let Some(m) = graph.node_at_signed(ci as i64 + di, cj as i64 + dj) else { continue };
                if clearance.segment_clear(graph.nodes[n].point, graph.nodes[m].point) && clearance.segment_clear(graph.nodes[m].point, graph.nodes[n].point) {
                    bits |= 1 << k;
                }
            }
            graph.moves[cj * cols + ci] = bits;
        }
        graph
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node_at_signed(&self, ci: i64, cj: i64) -> Option<usize> {
        if ci < 0 || cj < 0 || ci as usize >= self.cols || cj as usize >= self.rows {
            return None;
        }
        self.node_of_cell_index(cj as usize * self.cols + ci as usize)
    }

    pub fn node_at(&self, ci: usize, cj: usize) -> Option<usize> {
        self.node_at_signed(ci as i64, cj as i64)
    }

    pub fn node_of_cell_index(&self, idx: usize) -> Option<usize> {
        match self.node_at[idx] {
            NO_NODE => None,
            n => Some(n as usize),
        }
    }

    /// Row-major coarse index of a node.
    pub fn cell_index(&self, node: usize) -> usize {
        let (ci, cj) = self.nodes[node].cell;
        cj * self.cols + ci
    }

    /// Coarse cell containing a world point, if inside the lattice.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ci = ((x - self.origin[0]) / self.side).floor();
        let cj = ((y - self.origin[1]) / self.side).floor();
        (ci >= 0.0 && cj >= 0.0 && (ci as usize) < self.cols && (cj as usize) < self.rows).then_some((ci as usize, cj as usize))
    }

    /// True if the edge from `a` in direction `NEIGHBORS[k]` exists.
    pub fn has_move(&self, node: usize, k: usize) -> bool {
        self.moves[self.cell_index(node)] & (1 << k) != 0
    }

    /// Neighbor of `node` in direction `NEIGHBORS[k]`, if the edge exists.
    pub fn neighbor(&self, node: usize, k: usize) -> Option<usize> {
        if !self.has_move(node, k) {
            return None;
        }
        let (ci, cj) = self.nodes[node].cell;
        let (di, dj) = NEIGHBORS[k];
        self.node_at_signed(ci as i64 + di, cj as i64 + dj)
    }

    /// Node to attach an agent at `(x, y)` to: the node of its own cell when
    /// the way there is clear, otherwise the nearest node with a clear
    /// straight approach.
    pub fn attach(&self, clearance: &ClearanceMap, x: f64, y: f64) -> Option<usize> {
        if let Some(n) = self.cell_of(x, y).and_then(|(ci, cj)| self.node_at(ci, cj)) {
            if clearance.segment_clear((x, y), self.nodes[n].point) {
                return Some(n);
            }
        }
        let mut order: Vec<(f64, usize)> = self.nodes.iter().enumerate().map(|(n, node)| ((node.point.0 - x).hypot(node.point.1 - y), n)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.into_iter().find(|(_, n)| clearance.segment_clear((x, y), self.nodes[*n].point)).map(|(_, n)| n)
    }

    /// Nodes connected to `start`.
    pub fn component(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(n) = queue.pop_front() {
            for_each_move(self, self.cell_index(n), |c, _| {
                let m = self.node_of_cell_index(c).expect("moves lead to nodes");
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            });
        }
        seen
    }

    /// Shortest node sequence from `a` to `b`, both inclusive.
    pub fn path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let p = astar(self, self.cell_index(a), self.cell_index(b))?;
        Some(p.cells.into_iter().map(|c| self.node_of_cell_index(c).expect("paths run over nodes")).collect())
    }
}

impl GridGraph for CellGraph {
    fn width(&self) -> usize {
        self.cols
    }

    fn height(&self) -> usize {
        self.rows
    }

    fn is_open(&self, idx: usize) -> bool {
        self.node_at[idx] != NO_NODE
    }

    fn can_move(&self, from: usize, to: usize) -> bool {
        let (fi, fj) = ((from % self.cols) as i64, (from / self.cols) as i64);
        let (ti, tj) = ((to % self.cols) as i64, (to / self.cols) as i64);
        NEIGHBORS.iter().position(|d| *d == (ti - fi, tj - fj)).is_some_and(|k| self.moves[from] & (1 << k) != 0)
    }
}
