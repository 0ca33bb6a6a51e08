//! Backtracking spiral coverage over the planning graph.
//!
//! The agent keeps covered space or obstacles on its right: at every cell it
//! tries right, straight, left and back, in that order, among unvisited
//! 4-neighbors. When none is left it backtracks along the shortest path
//! through visited cells to the nearest unvisited cell and starts a new spiral.

use crate::astar::{dijkstra, GridGraph};
use crate::cellgraph::CellGraph;

/// Straight directions in counterclockwise order, as indices into `NEIGHBORS`.
const RIGHT: [usize; 4] = [3, 0, 1, 2];
const LEFT: [usize; 4] = [1, 2, 3, 0];
const BACK: [usize; 4] = [2, 3, 0, 1];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsaPlan {
    /// Nodes in driving order, starting with the start node.
    pub sequence: Vec<usize>,
    /// Moves onto already visited nodes.
    pub revisits: usize,
    pub backtracks: usize,
}

/// The graph seen by the backtracking search: any node may be reached, but
/// only visited nodes are expanded.
struct VisitedView<'a> {
    graph: &'a CellGraph,
    visited: &'a [bool],
}

impl GridGraph for VisitedView<'_> {
    fn width(&self) -> usize {
        self.graph.cols
    }

    fn height(&self) -> usize {
        self.graph.rows
    }

    fn is_open(&self, idx: usize) -> bool {
        self.graph.is_open(idx)
    }

    fn can_move(&self, from: usize, to: usize) -> bool {
        let node = self.graph.node_of_cell_index(from).expect("open cells are nodes");
        self.visited[node] && self.graph.can_move(from, to)
    }
}

fn free(graph: &CellGraph, visited: &[bool], node: usize, k: usize) -> Option<usize> {
    graph.neighbor(node, k).filter(|m| !visited[*m])
}

/// Heading that starts a spiral: prefer a free direction with its right side
/// blocked, so the spiral hugs the boundary.
fn initial_heading(graph: &CellGraph, visited: &[bool], node: usize) -> usize {
    (0..4)
        .find(|&k| free(graph, visited, node, k).is_some() && free(graph, visited, node, RIGHT[k]).is_none())
        .or_else(|| (0..4).find(|&k| free(graph, visited, node, k).is_some()))
        .unwrap_or(0)
}

pub fn bsa_plan(graph: &CellGraph, start: usize) -> BsaPlan {
    let mut visited = vec![false; graph.len()];
    visited[start] = true;
    let mut plan = BsaPlan { sequence: vec![start], revisits: 0, backtracks: 0 };
    let mut cur = start;
    let mut heading = initial_heading(graph, &visited, cur);
    loop {
        let next = [RIGHT[heading], heading, LEFT[heading], BACK[heading]].into_iter().find_map(|k| free(graph, &visited, cur, k).map(|m| (k, m)));
        if let Some((k, m)) = next {
            visited[m] = true;
            plan.sequence.push(m);
            cur = m;
            heading = k;
            continue;
        }
        let view = VisitedView { graph, visited: &visited };
        let mut target = None;
        let paths = dijkstra(&view, &[graph.cell_index(cur)], |c, _| {
            let n = graph.node_of_cell_index(c).expect("open cells are nodes");
            if visited[n] {
                true
            } else {
                target = Some(c);
                false
            }
        });
        let Some(t) = target else { break };
        let path = paths.path_to(t).expect("target was settled");
        let nodes: Vec<usize> = path.cells.iter().map(|c| graph.node_of_cell_index(*c).expect("open cells are nodes")).collect();
        plan.revisits += nodes.len().saturating_sub(2);
        plan.backtracks += 1;
        plan.sequence.extend_from_slice(&nodes[1..]);
        cur = *nodes.last().expect("path is non-empty");
        visited[cur] = true;
        heading = initial_heading(graph, &visited, cur);
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellgraph::{ClearanceMap, Lattice};
    use coverage_core::GridSpec;

    /// Graph whose coarse cells coincide with the fine cells of `usable`.
    fn unit_graph(w: usize, h: usize, usable: &[bool]) -> CellGraph {
        let spec = GridSpec::new(1.0, w, h, [0.0, 0.0]).unwrap();
        let clear = ClearanceMap::from_mask(spec, 0.0, usable.to_vec());
        CellGraph::build(&clear, usable, 1.0, Lattice::BoundingBox)
    }

    #[test]
    fn open_square_is_one_pure_spiral() {
        let g = unit_graph(8, 8, &[true; 64]);
        assert_eq!(g.len(), 64);
        let start = g.node_at(0, 0).unwrap();
        let plan = bsa_plan(&g, start);
        assert_eq!(plan.sequence.len(), 64);
        assert_eq!(plan.revisits, 0);
        assert_eq!(plan.backtracks, 0);
        // consecutive cells are 4-neighbors
        for w in plan.sequence.windows(2) {
            let (a, b) = (g.nodes[w[0]].cell, g.nodes[w[1]].cell);
            assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1);
        }
        // the first lap runs along the boundary
        let lap: Vec<(usize, usize)> = plan.sequence[..8].iter().map(|n| g.nodes[*n].cell).collect();
        assert_eq!(lap, (0..8).map(|i| (i, 0)).collect::<Vec<_>>());
    }

    #[test]
    fn dead_end_room_needs_a_backtrack() {
        // two rooms joined only through the bottom row
        let mut usable = vec![true; 35];
        for j in 1..5 {
            usable[j * 7 + 3] = false;
        }
        let g = unit_graph(7, 5, &usable);
        let start = g.node_at(0, 0).unwrap();
        let plan = bsa_plan(&g, start);
        let mut seen = vec![false; g.len()];
        for n in &plan.sequence {
            seen[*n] = true;
        }
        assert!(seen.iter().all(|s| *s));
        assert!(plan.backtracks >= 1);
        assert!(plan.revisits >= 1);
    }

    #[test]
    fn ring_around_an_obstacle_is_fully_visited() {
        let mut usable = vec![true; 81];
        for j in 3..6 {
            for i in 3..6 {
                usable[j * 9 + i] = false;
            }
        }
        let g = unit_graph(9, 9, &usable);
        let start = g.node_at(4, 1).unwrap();
        let plan = bsa_plan(&g, start);
        let mut seen = vec![false; g.len()];
        for n in &plan.sequence {
            seen[*n] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn start_next_to_a_wall() {
        let mut usable = vec![true; 30];
        usable[5 * 2 + 2] = false;
        let g = unit_graph(5, 6, &usable);
        let start = g.node_at(1, 2).unwrap();
        let plan = bsa_plan(&g, start);
        let mut seen = vec![false; g.len()];
        plan.sequence.iter().for_each(|n| seen[*n] = true);
        assert!(seen.iter().all(|s| *s));
    }
}
