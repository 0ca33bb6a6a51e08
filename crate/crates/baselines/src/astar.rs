//! Shortest paths on 8-connected grids with unit and √2 step costs.
//!
//! Costs are kept as integer counts of straight and diagonal steps, so two
//! searches that find equally long paths report bit-identical costs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// 8-neighborhood offsets; the first four are the straight moves.
pub const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Path cost as step counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StepCount {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCount {
    pub fn value(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT2
    }

    fn add(self, diagonal: bool) -> Self {
        if diagonal {
            Self { straight: self.straight, diagonal: self.diagonal + 1 }
        } else {
            Self { straight: self.straight + 1, diagonal: self.diagonal }
        }
    }
}

/// A grid the searches can walk on. Cells are row-major indices.
pub trait GridGraph {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn is_open(&self, idx: usize) -> bool;
    /// Whether the single move between two open 8-neighbors is allowed.
    fn can_move(&self, from: usize, to: usize) -> bool;
}

/// A boolean traversability mask; diagonal moves may not cut a blocked corner.
#[derive(Debug, Clone, Copy)]
pub struct MaskGrid<'a> {
    pub mask: &'a [bool],
    pub width: usize,
    pub height: usize,
}

impl<'a> MaskGrid<'a> {
    pub fn new(mask: &'a [bool], width: usize, height: usize) -> Self {
        assert_eq!(mask.len(), width * height, "mask size");
        Self { mask, width, height }
    }
}

impl GridGraph for MaskGrid<'_> {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn is_open(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    fn can_move(&self, from: usize, to: usize) -> bool {
        let (fi, fj) = (from % self.width, from / self.width);
        let (ti, tj) = (to % self.width, to / self.width);
        if fi == ti || fj == tj {
            return true;
        }
        self.mask[fj * self.width + ti] && self.mask[tj * self.width + fi]
    }
}

/// Calls `f(neighbor, diagonal)` for every allowed move out of `idx`.
pub fn for_each_move<G: GridGraph + ?Sized>(g: &G, idx: usize, mut f: impl FnMut(usize, bool)) {
    let (w, h) = (g.width() as i64, g.height() as i64);
    let (i, j) = ((idx % g.width()) as i64, (idx / g.width()) as i64);
    for (k, (di, dj)) in NEIGHBORS.iter().enumerate() {
        let (ni, nj) = (i + di, j + dj);
        if ni < 0 || nj < 0 || ni >= w || nj >= h {
            continue;
        }
        let n = (nj * w + ni) as usize;
        if g.is_open(n) && g.can_move(idx, n) {
            f(n, k >= 4);
        }
    }
}

/// Octile distance, the exact cost on an obstacle-free grid.
pub fn octile(width: usize, a: usize, b: usize) -> f64 {
    let dx = (a % width).abs_diff(b % width);
    let dy = (a / width).abs_diff(b / width);
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    (hi - lo) as f64 + lo as f64 * SQRT2
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    /// Visited cells from start to goal inclusive.
    pub cells: Vec<usize>,
    pub steps: StepCount,
}

impl GridPath {
    pub fn cost(&self) -> f64 {
        self.steps.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    g: StepCount,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on f, then on cell index for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NO_PARENT: usize = usize::MAX;

fn walk_back(parent: &[usize], goal: usize) -> Vec<usize> {
    let mut cells = vec![goal];
    let mut c = goal;
    while parent[c] != NO_PARENT {
        c = parent[c];
        cells.push(c);
    }
    cells.reverse();
    cells
}

/// Optimal path from `a` to `b` with the octile heuristic, or `None` when
/// `b` cannot be reached. Both endpoints must be open.
pub fn astar<G: GridGraph + ?Sized>(g: &G, a: usize, b: usize) -> Option<GridPath> {
    if !g.is_open(a) || !g.is_open(b) {
        return None;
    }
    let n = g.width() * g.height();
    let mut best: Vec<Option<StepCount>> = vec![None; n];
    let mut parent = vec![NO_PARENT; n];
    let mut heap = BinaryHeap::new();
    best[a] = Some(StepCount::default());
    heap.push(Entry { f: octile(g.width(), a, b), g: StepCount::default(), idx: a });
    while let Some(Entry { g: gc, idx, .. }) = heap.pop() {
        if best[idx] != Some(gc) {
            continue;
        }
        if idx == b {
            return Some(GridPath { cells: walk_back(&parent, b), steps: gc });
        }
        for_each_move(g, idx, |nb, diagonal| {
            let ng = gc.add(diagonal);
            // reopening on improvement keeps the search exact even if float
            // rounding makes the heuristic marginally inconsistent
            if best[nb].is_none_or(|old| ng.value() < old.value()) {
                best[nb] = Some(ng);
                parent[nb] = idx;
                heap.push(Entry { f: ng.value() + octile(g.width(), nb, b), g: ng, idx: nb });
            }
        });
    }
    None
}

/// Single- or multi-source shortest path tree.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<Option<StepCount>>,
    parent: Vec<usize>,
}

impl ShortestPaths {
    pub fn cost(&self, idx: usize) -> Option<f64> {
        self.dist[idx].map(StepCount::value)
    }

    /// Path from the nearest source to `idx`, if `idx` was settled.
    pub fn path_to(&self, idx: usize) -> Option<GridPath> {
        let steps = self.dist[idx]?;
        Some(GridPath { cells: walk_back(&self.parent, idx), steps })
    }
}

/// Dijkstra from `sources`. `settle(idx, cost)` sees every cell in order of
/// cost and stops the search by returning false; unsettled cells keep the
/// tentative distance they had, so only settled cells are exact.
pub fn dijkstra<G: GridGraph + ?Sized>(g: &G, sources: &[usize], mut settle: impl FnMut(usize, StepCount) -> bool) -> ShortestPaths {
    let n = g.width() * g.height();
    let mut dist: Vec<Option<StepCount>> = vec![None; n];
    let mut parent = vec![NO_PARENT; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if g.is_open(s) && dist[s].is_none() {
            dist[s] = Some(StepCount::default());
            heap.push(Entry { f: 0.0, g: StepCount::default(), idx: s });
        }
    }
    let mut done = vec![false; n];
    while let Some(Entry { g: gc, idx, .. }) = heap.pop() {
        if done[idx] || dist[idx] != Some(gc) {
            continue;
        }
        done[idx] = true;
        if !settle(idx, gc) {
            break;
        }
        for_each_move(g, idx, |nb, diagonal| {
            let ng = gc.add(diagonal);
            if !done[nb] && dist[nb].is_none_or(|old| ng.value() < old.value()) {
                dist[nb] = Some(ng);
                parent[nb] = idx;
                heap.push(Entry { f: ng.value(), g: ng, idx: nb });
            }
        });
    }
    for (d, settled) in dist.iter_mut().zip(&done) {
        if !settled {
            *d = None;
        }
    }
    ShortestPaths { dist, parent }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(w: usize, h: usize) -> Vec<bool> {
        vec![true; w * h]
    }

    #[test]
    fn same_cell_has_zero_cost() {
        let m = open(5, 5);
        let p = astar(&MaskGrid::new(&m, 5, 5), 12, 12).unwrap();
        assert_eq!(p.cells, vec![12]);
        assert_eq!(p.cost(), 0.0);
    }

    #[test]
    fn open_corner_to_corner_is_diagonal() {
        let m = open(10, 10);
        let p = astar(&MaskGrid::new(&m, 10, 10), 0, 99).unwrap();
        assert_eq!(p.steps, StepCount { straight: 0, diagonal: 9 });
        assert_eq!(p.cost(), 9.0 * SQRT2);
        assert_eq!(p.cells.len(), 10);
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        let mut m = open(6, 6);
        // ring around cell (4, 4)
        for (i, j) in [(3, 3), (4, 3), (5, 3), (3, 4), (3, 5)] {
            m[j * 6 + i] = false;
        }
        assert!(astar(&MaskGrid::new(&m, 6, 6), 0, 4 * 6 + 4).is_none());
    }

    #[test]
    fn corners_are_not_cut() {
        // 2x2 with the two off-diagonal cells blocked
        let m = vec![true, false, false, true];
        assert!(astar(&MaskGrid::new(&m, 2, 2), 0, 3).is_none());
        let m = vec![true, true, false, true];
        let p = astar(&MaskGrid::new(&m, 2, 2), 0, 3).unwrap();
        assert_eq!(p.steps, StepCount { straight: 2, diagonal: 0 });
    }

    #[test]
    fn path_cells_are_adjacent_and_open() {
        let mut m = open(12, 9);
        for j in 0..7 {
            m[j * 12 + 6] = false;
        }
        let g = MaskGrid::new(&m, 12, 9);
        let p = astar(&g, 0, 11).unwrap();
        for w in p.cells.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(m[a] && m[b]);
            assert!((a % 12).abs_diff(b % 12) <= 1 && (a / 12).abs_diff(b / 12) <= 1);
            assert!(g.can_move(a, b));
        }
        let sp = dijkstra(&g, &[0], |_, _| true);
        assert_eq!(sp.dist[11], Some(p.steps));
        assert_eq!(sp.path_to(11).unwrap().steps, p.steps);
    }
}
