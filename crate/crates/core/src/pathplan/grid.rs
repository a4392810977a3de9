use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// A 1 m grid cell. Coordinates are meters from the origin corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn manhattan(&self, other: &Cell) -> u32 {
        (self.x - other.x).unsigned_abs()
            + (self.y - other.y).unsigned_abs()
            + (self.z - other.z).unsigned_abs()
    }

    pub fn euclidean(&self, other: &Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        let dz = (self.z - other.z) as f64;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_adjacent(&self, other: &Cell) -> bool {
        self.manhattan(other) == 1
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// Neighborhood used by a planner. Ground agents stay on the z = 0 plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionModel {
    Ground4,
    Aerial6,
}

const GROUND_MOVES: [(i32, i32, i32); 4] = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)];
const AERIAL_MOVES: [(i32, i32, i32); 6] = [
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
];

impl MotionModel {
    pub fn moves(self) -> &'static [(i32, i32, i32)] {
        match self {
            MotionModel::Ground4 => &GROUND_MOVES,
            MotionModel::Aerial6 => &AERIAL_MOVES,
        }
    }

    /// Whether a cell may be occupied at all under this model.
    pub fn admits(self, cell: &Cell) -> bool {
        match self {
            MotionModel::Ground4 => cell.z == 0,
            MotionModel::Aerial6 => true,
        }
    }
}

/// Occupancy grid with 1 m cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    blocked: Vec<bool>,
}

impl Grid {
    pub fn new(dims: [usize; 3]) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Self {
            dims,
            blocked: vec![false; n],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n_cells(&self) -> usize {
        self.blocked.len()
    }

    pub fn in_bounds(&self, c: &Cell) -> bool {
        c.x >= 0
            && c.y >= 0
            && c.z >= 0
            && (c.x as usize) < self.dims[0]
            && (c.y as usize) < self.dims[1]
            && (c.z as usize) < self.dims[2]
    }

    pub fn index(&self, c: &Cell) -> usize {
        (c.z as usize * self.dims[1] + c.y as usize) * self.dims[0] + c.x as usize
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        Cell::new(x as i32, y as i32, z as i32)
    }

    pub fn is_blocked(&self, c: &Cell) -> bool {
        self.blocked[self.index(c)]
    }

    /// In bounds and not an obstacle.
    pub fn is_free(&self, c: &Cell) -> bool {
        self.in_bounds(c) && !self.blocked[self.index(c)]
    }

    pub fn set_blocked(&mut self, c: &Cell, blocked: bool) {
        let i = self.index(c);
        self.blocked[i] = blocked;
    }

    pub fn n_blocked(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn blocked_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.blocked
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| self.cell_at(i))
    }

    /// Free neighbors of `c` under `model`.
    pub fn neighbors(&self, c: Cell, model: MotionModel) -> impl Iterator<Item = Cell> + '_ {
        model.moves().iter().filter_map(move |&(dx, dy, dz)| {
            let n = Cell::new(c.x + dx, c.y + dy, c.z + dz);
            (model.admits(&n) && self.is_free(&n)).then_some(n)
        })
    }

    /// Marks every free cell reachable from `seed` under `model`.
    pub fn reachable_from(&self, seed: Cell, model: MotionModel) -> Vec<bool> {
        let mut seen = vec![false; self.n_cells()];
        if !self.is_free(&seed) || !model.admits(&seed) {
            return seen;
        }
        let mut queue = VecDeque::new();
        seen[self.index(&seed)] = true;
        queue.push_back(seed);
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c, model) {
                let i = self.index(&n);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Largest connected set of free cells on the z = 0 plane (4-connected).
    pub fn largest_ground_component(&self) -> Vec<bool> {
        let mut label = vec![usize::MAX; self.dims[0] * self.dims[1]];
        let mut best: (usize, usize) = (0, usize::MAX);
        let mut next = 0;
        for y in 0..self.dims[1] {
            for x in 0..self.dims[0] {
                let c = Cell::new(x as i32, y as i32, 0);
                let flat = y * self.dims[0] + x;
                if !self.is_free(&c) || label[flat] != usize::MAX {
                    continue;
                }
                let mut size = 0;
                let mut queue = VecDeque::from([c]);
                label[flat] = next;
                while let Some(cur) = queue.pop_front() {
                    size += 1;
                    for n in self.neighbors(cur, MotionModel::Ground4) {
                        let f = n.y as usize * self.dims[0] + n.x as usize;
                        if label[f] == usize::MAX {
                            label[f] = next;
                            queue.push_back(n);
                        }
                    }
                }
                if best.1 == usize::MAX || size > best.0 {
                    best = (size, next);
                }
                next += 1;
            }
        }
        let mut out = vec![false; self.n_cells()];
        if best.1 != usize::MAX {
            for (flat, l) in label.iter().enumerate() {
                if *l == best.1 {
                    out[flat] = true;
                }
            }
        }
        out
    }
}
