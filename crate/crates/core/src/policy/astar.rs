//! 8-connected grid search with octile costs.
//!
//! Cardinal steps cost 1, diagonal steps √2 (in cells). A diagonal step is
//! allowed only when both orthogonally adjacent cells are free, so paths never
//! clip the corner of an obstacle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// A grid path: consecutive cells are 4- or 8-adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<usize>,
    /// Total cost in cell units.
    pub cost: f64,
}

impl Path {
    pub fn length_m(&self, resolution: f64) -> f64 {
        self.cost * resolution
    }
}

/// Traversability view over a row-major grid.
#[derive(Debug, Clone, Copy)]
pub struct NavGrid<'a> {
    pub width: usize,
    pub height: usize,
    pub free: &'a [bool],
}

impl<'a> NavGrid<'a> {
    pub fn new(width: usize, height: usize, free: &'a [bool]) -> Self {
        debug_assert_eq!(free.len(), width * height);
        NavGrid {
            width,
            height,
            free,
        }
    }

    /// Free neighbors of `cell` with step costs.
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (x, y) = ((cell % self.width) as isize, (cell / self.width) as isize);
        let (w, h) = (self.width as isize, self.height as isize);
        let free = move |x: isize, y: isize| {
            x >= 0 && y >= 0 && x < w && y < h && self.free[(y * w + x) as usize]
        };
        const STEPS: [(isize, isize); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        STEPS.into_iter().filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if !free(nx, ny) {
                return None;
            }
            if dx != 0 && dy != 0 {
                if !free(x + dx, y) || !free(x, y + dy) {
                    return None;
                }
                Some(((ny * w + nx) as usize, SQRT_2))
            } else {
                Some(((ny * w + nx) as usize, 1.0))
            }
        })
    }

    pub fn octile(&self, a: usize, b: usize) -> f64 {
        let dx = (a % self.width).abs_diff(b % self.width) as f64;
        let dy = (a / self.width).abs_diff(b / self.width) as f64;
        dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    h: f64,
    cell: usize,
}

impl Eq for Node {}

impl Ord for Node {
    // Reversed so the max-heap pops the smallest (f, h, cell).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Optimal path from `start` to `goal` by A* with the octile heuristic.
pub fn shortest_path(grid: &NavGrid, start: usize, goal: usize) -> Result<Path> {
    let n = grid.width * grid.height;
    if start >= n || goal >= n || !grid.free[start] || !grid.free[goal] {
        return Err(Error::NoPath { start, goal });
    }
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[start] = 0.0;
    let h0 = grid.octile(start, goal);
    open.push(Node {
        f: h0,
        h: h0,
        cell: start,
    });
    while let Some(Node { cell, .. }) = open.pop() {
        if closed[cell] {
            continue;
        }
        if cell == goal {
            let mut cells = vec![goal];
            let mut c = goal;
            while c != start {
                c = parent[c];
                cells.push(c);
            }
            cells.reverse();
            return Ok(Path {
                cells,
                cost: g[goal],
            });
        }
        closed[cell] = true;
        for (next, step) in grid.neighbors(cell) {
            let cand = g[cell] + step;
            if !closed[next] && cand < g[next] - 1e-12 {
                g[next] = cand;
                parent[next] = cell;
                let h = grid.octile(next, goal);
                open.push(Node {
                    f: cand + h,
                    h,
                    cell: next,
                });
            }
        }
    }
    Err(Error::NoPath { start, goal })
}

/// Octile-cost distance from `start` to every cell (∞ when unreachable).
pub fn distance_field(grid: &NavGrid, start: usize) -> Vec<f64> {
    let n = grid.width * grid.height;
    let mut dist = vec![f64::INFINITY; n];
    if start >= n || !grid.free[start] {
        return dist;
    }
    let mut open = BinaryHeap::new();
    dist[start] = 0.0;
    open.push(Node {
        f: 0.0,
        h: 0.0,
        cell: start,
    });
    while let Some(Node { f, cell, .. }) = open.pop() {
        if f > dist[cell] {
            continue;
        }
        for (next, step) in grid.neighbors(cell) {
            let cand = f + step;
            if cand < dist[next] - 1e-12 {
                dist[next] = cand;
                open.push(Node {
                    f: cand,
                    h: 0.0,
                    cell: next,
                });
            }
        }
    }
    dist
}

/// The reachable goal with the smallest distance (ties by cell index).
pub fn nearest_goal(dist: &[f64], goals: impl IntoIterator<Item = usize>) -> Option<usize> {
    goals
        .into_iter()
        .filter(|&g| dist[g].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
}
