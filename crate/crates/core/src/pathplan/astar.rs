use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::grid::{Cell, Grid, MotionModel};
use super::path::{move_tick, Path};
use super::reservation::ReservationTable;
use super::PlanError;

/// Space-time constraints for a reservation-aware search.
#[derive(Clone, Copy, Debug)]
pub struct SpaceTime<'a> {
    pub table: &'a ReservationTable,
    pub agent: usize,
    pub start_tick: u64,
    pub velocity: f64,
    /// Cells currently held by parked agents; treated as obstacles.
    pub occupied: &'a HashSet<Cell>,
    pub max_waits: u32,
    /// Extra moves allowed beyond the unconstrained shortest path.
    pub detour: u32,
}

/// Shortest path under `model`. With `reservations`, searches over
/// (cell, time) states and never enters a (cell, tick) held by another agent.
pub fn astar(
    grid: &Grid,
    start: Cell,
    goal: Cell,
    model: MotionModel,
    reservations: Option<&SpaceTime<'_>>,
) -> Result<Path, PlanError> {
    for c in [start, goal] {
        if !grid.is_free(&c) || !model.admits(&c) {
            return Err(PlanError::Endpoint(c));
        }
    }
    let plain = astar_plain(grid, start, goal, model)?;
    match reservations {
        None => Ok(plain),
        Some(st) => astar_space_time(grid, start, goal, model, st, plain.moves() as u32),
    }
}

fn astar_plain(grid: &Grid, start: Cell, goal: Cell, model: MotionModel) -> Result<Path, PlanError> {
    if start == goal {
        return Ok(Path::stationary(start));
    }
    let start_idx = grid.index(&start);
    let goal_idx = grid.index(&goal);
    let mut g_score: HashMap<usize, u32> = HashMap::new();
    let mut parent: HashMap<usize, usize> = HashMap::new();
    // (f, -g, seq) ordering: lowest f first, deepest node on ties.
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    g_score.insert(start_idx, 0);
    open.push(Reverse((start.manhattan(&goal), Reverse(0u32), seq, start_idx)));

    while let Some(Reverse((_, Reverse(g), _, idx))) = open.pop() {
        if g > g_score[&idx] {
            continue;
        }
        if idx == goal_idx {
            let mut cells = vec![goal];
            let mut cur = idx;
            while let Some(&p) = parent.get(&cur) {
                cells.push(grid.cell_at(p));
                cur = p;
            }
            cells.reverse();
            return Ok(Path::new(cells));
        }
        let cell = grid.cell_at(idx);
        for n in grid.neighbors(cell, model) {
            let ni = grid.index(&n);
            let ng = g + 1;
            if g_score.get(&ni).is_none_or(|&old| ng < old) {
                g_score.insert(ni, ng);
                parent.insert(ni, idx);
                seq += 1;
                open.push(Reverse((ng + n.manhattan(&goal), Reverse(ng), seq, ni)));
            }
        }
    }
    Err(PlanError::NoPath { start, goal })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct StKey {
    idx: usize,
    moves: u32,
    waits: u32,
}

#[derive(Clone, Copy, Debug)]
struct StEntry {
    f: f64,
    g: f64,
    seq: u64,
    key: StKey,
}

impl PartialEq for StEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for StEntry {}
impl PartialOrd for StEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for StEntry {
    // max-heap: invert so the smallest f (then largest g, then oldest) pops first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

const MAX_SPACE_TIME_EXPANSIONS: usize = 400_000;

fn astar_space_time(
    grid: &Grid,
    start: Cell,
    goal: Cell,
    model: MotionModel,
    st: &SpaceTime<'_>,
    shortest: u32,
) -> Result<Path, PlanError> {
    let v = st.velocity;
    let tick_of = |k: &StKey| st.start_tick + k.waits as u64 + move_tick(k.moves, v);
    let free = |c: &Cell, k: &StKey| {
        st.table.is_free_for(c, tick_of(k), st.agent) && (*c == start || !st.occupied.contains(c))
    };
    let max_moves = shortest + st.detour;
    let start_key = StKey {
        idx: grid.index(&start),
        moves: 0,
        waits: 0,
    };
    let mut parent: HashMap<StKey, StKey> = HashMap::new();
    let mut closed: HashSet<StKey> = HashSet::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(StEntry {
        f: start.manhattan(&goal) as f64 / v,
        g: 0.0,
        seq,
        key: start_key,
    });
    let mut expansions = 0usize;

    while let Some(StEntry { g, key, .. }) = open.pop() {
        if !closed.insert(key) {
            continue;
        }
        expansions += 1;
        if expansions > MAX_SPACE_TIME_EXPANSIONS {
            break;
        }
        let cell = grid.cell_at(key.idx);
        if cell == goal {
            let mut cells = vec![cell];
            let mut cur = key;
            while let Some(p) = parent.get(&cur) {
                cells.push(grid.cell_at(p.idx));
                cur = *p;
            }
            cells.reverse();
            return Ok(Path::new(cells));
        }
        let mut push = |next: StKey, c: Cell, g: f64, parent: &mut HashMap<StKey, StKey>| {
            if closed.contains(&next) {
                return;
            }
            seq += 1;
            parent.entry(next).or_insert(key);
            open.push(StEntry {
                f: g + c.manhattan(&goal) as f64 / v,
                g,
                seq,
                key: next,
            });
        };
        if key.moves < max_moves {
            for n in grid.neighbors(cell, model) {
                let next = StKey {
                    idx: grid.index(&n),
                    moves: key.moves + 1,
                    waits: key.waits,
                };
                if free(&n, &next) && !parent.contains_key(&next) {
                    push(next, n, g + 1.0 / v, &mut parent);
                }
            }
        }
        if key.waits < st.max_waits {
            let next = StKey {
                waits: key.waits + 1,
                ..key
            };
            if free(&cell, &next) && !parent.contains_key(&next) {
                push(next, cell, g + 1.0, &mut parent);
            }
        }
    }
    Err(PlanError::NoPath { start, goal })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: i32) -> Vec<Cell> {
        (0..=n).map(|x| Cell::new(x, 0, 0)).collect()
    }

    #[test]
    fn straight_line_length() {
        let g = Grid::new([10, 10, 1]);
        let p = astar(&g, Cell::new(0, 0, 0), Cell::new(3, 0, 0), MotionModel::Ground4, None).unwrap();
        assert_eq!(p.length(), 3.0);
        assert_eq!(p.cells(), &line(3)[..]);
    }

    #[test]
    fn enclosed_goal_has_no_path() {
        let mut g = Grid::new([7, 7, 3]);
        let goal = Cell::new(3, 3, 1);
        for n in Grid::new([7, 7, 3]).neighbors(goal, MotionModel::Aerial6) {
            g.set_blocked(&n, true);
        }
        let err = astar(&g, Cell::new(0, 0, 0), goal, MotionModel::Aerial6, None).unwrap_err();
        assert!(matches!(err, PlanError::NoPath { .. }));
    }

    #[test]
    fn ground_detours_where_aerial_climbs() {
        let mut g = Grid::new([5, 5, 3]);
        for y in 0..4 {
            g.set_blocked(&Cell::new(2, y, 0), true);
        }
        let s = Cell::new(0, 0, 0);
        let t = Cell::new(4, 0, 0);
        let ground = astar(&g, s, t, MotionModel::Ground4, None).unwrap();
        let aerial = astar(&g, s, t, MotionModel::Aerial6, None).unwrap();
        assert_eq!(ground.length(), 12.0);
        assert_eq!(aerial.length(), 6.0);
        assert!(ground.is_valid(&g, MotionModel::Ground4));
        assert!(aerial.is_valid(&g, MotionModel::Aerial6));
    }

    #[test]
    fn blocked_endpoint_is_rejected() {
        let mut g = Grid::new([3, 3, 1]);
        g.set_blocked(&Cell::new(2, 2, 0), true);
        let err = astar(&g, Cell::new(0, 0, 0), Cell::new(2, 2, 0), MotionModel::Ground4, None).unwrap_err();
        assert_eq!(err, PlanError::Endpoint(Cell::new(2, 2, 0)));
    }

    #[test]
    fn space_time_waits_for_reserved_corridor() {
        // 1-wide corridor; another agent holds cell 2 at ticks 1..=3
        let g = Grid::new([6, 1, 1]);
        let mut table = ReservationTable::new();
        for t in 1..=3 {
            table.reserve(Cell::new(2, 0, 0), t, 7).unwrap();
        }
        let occupied = HashSet::new();
        let st = SpaceTime {
            table: &table,
            agent: 0,
            start_tick: 0,
            velocity: 1.0,
            occupied: &occupied,
            max_waits: 8,
            detour: 4,
        };
        let p = astar(&g, Cell::new(0, 0, 0), Cell::new(5, 0, 0), MotionModel::Ground4, Some(&st)).unwrap();
        assert_eq!(p.length(), 5.0);
        assert!(p.waits() >= 2);
        assert!(table.first_conflict(&p, 1.0, 0, 0).is_none());
    }

    #[test]
    fn space_time_routes_around_reservation() {
        let g = Grid::new([5, 3, 1]);
        let mut table = ReservationTable::new();
        for t in 0..10 {
            table.reserve(Cell::new(2, 1, 0), t, 3).unwrap();
        }
        let occupied = HashSet::new();
        let st = SpaceTime {
            table: &table,
            agent: 0,
            start_tick: 0,
            velocity: 1.0,
            occupied: &occupied,
            max_waits: 0,
            detour: 4,
        };
        let p = astar(&g, Cell::new(0, 1, 0), Cell::new(4, 1, 0), MotionModel::Ground4, Some(&st)).unwrap();
        assert_eq!(p.length(), 6.0);
        assert!(!p.cells().contains(&Cell::new(2, 1, 0)));
    }
}
