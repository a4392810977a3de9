use std::collections::HashSet;

use super::astar::{astar, SpaceTime};
use super::grid::{Cell, Grid, MotionModel};
use super::path::Path;
use super::reservation::ReservationTable;

/// Waits tried at the start cell before an agent is left parked for a tick.
const MAX_LEADING_WAITS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct PathRequest {
    pub agent: usize,
    /// Task-completion cost of the owner; lower cost keeps its path.
    pub cost: f64,
    pub velocity: f64,
    pub model: MotionModel,
    pub path: Path,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedPath {
    pub agent: usize,
    pub path: Path,
    pub replanned: bool,
    pub waits_inserted: usize,
    /// No route found; the path only holds the start cell for one tick.
    pub blocked: bool,
    /// Agents whose reservations were dropped to make room for a hold.
    pub evicted: Vec<usize>,
}

/// Reserves each request in ascending cost order. A request whose path
/// collides with earlier reservations is replanned over free (cell, tick)
/// states; failing that, waits are inserted at its start before retrying.
pub fn resolve_paths(
    grid: &Grid,
    mut requests: Vec<PathRequest>,
    table: &mut ReservationTable,
    start_tick: u64,
    occupied: &HashSet<Cell>,
) -> Vec<ResolvedPath> {
    requests.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.agent.cmp(&b.agent)));
    let mut out = Vec::with_capacity(requests.len());
    for req in requests {
        let resolved = resolve_one(grid, &req, table, start_tick, occupied);
        out.push(resolved);
    }
    out
}

pub(crate) fn resolve_one(
    grid: &Grid,
    req: &PathRequest,
    table: &mut ReservationTable,
    start_tick: u64,
    occupied: &HashSet<Cell>,
) -> ResolvedPath {
    let start = req.path.start();
    let goal = req.path.goal();
    let blocked_by_parked = req.path.cells().iter().skip(1).any(|c| occupied.contains(c));
    if !blocked_by_parked && table.reserve_path(&req.path, req.velocity, start_tick, req.agent).is_ok() {
        return ResolvedPath {
            agent: req.agent,
            path: req.path.clone(),
            replanned: false,
            waits_inserted: 0,
            blocked: false,
            evicted: Vec::new(),
        };
    }
    for waits in 0..=MAX_LEADING_WAITS {
        let t0 = start_tick + waits as u64;
        if (1..=waits as u64).any(|k| !table.is_free_for(&start, start_tick + k, req.agent)) {
            break;
        }
        let st = SpaceTime {
            table,
            agent: req.agent,
            start_tick: t0,
            velocity: req.velocity,
            occupied,
            max_waits: 8,
            detour: 16,
        };
        if let Ok(tail) = astar(grid, start, goal, req.model, Some(&st)) {
            let mut cells = vec![start; waits];
            cells.extend_from_slice(tail.cells());
            let path = Path::new(cells);
            if table.reserve_path(&path, req.velocity, start_tick, req.agent).is_ok() {
                return ResolvedPath {
                    agent: req.agent,
                    path,
                    replanned: true,
                    waits_inserted: waits,
                    blocked: false,
                    evicted: Vec::new(),
                };
            }
        }
    }
    // hold position; the mover retries on its next tick. An agent standing in
    // a cell always owns it, so anyone routed through it loses its reservations.
    let hold = Path::new(vec![start, start]);
    let mut evicted = Vec::new();
    while let Err(c) = table.reserve_path(&hold, req.velocity, start_tick, req.agent) {
        table.release_agent(c.holder);
        evicted.push(c.holder);
    }
    ResolvedPath {
        agent: req.agent,
        path: hold,
        replanned: true,
        waits_inserted: 1,
        blocked: true,
        evicted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(y: i32, from: i32, to: i32) -> Path {
        let step = if to >= from { 1 } else { -1 };
        let mut cells = Vec::new();
        let mut x = from;
        loop {
            cells.push(Cell::new(x, y, 0));
            if x == to {
                break;
            }
            x += step;
        }
        Path::new(cells)
    }

    #[test]
    fn disjoint_paths_unchanged() {
        let g = Grid::new([6, 6, 1]);
        let mut table = ReservationTable::new();
        let reqs = vec![
            PathRequest { agent: 0, cost: 1.0, velocity: 1.0, model: MotionModel::Ground4, path: straight(0, 0, 5) },
            PathRequest { agent: 1, cost: 2.0, velocity: 1.0, model: MotionModel::Ground4, path: straight(4, 0, 5) },
        ];
        let out = resolve_paths(&g, reqs.clone(), &mut table, 0, &HashSet::new());
        assert!(out.iter().all(|r| !r.replanned));
        assert_eq!(out[0].path, reqs[0].path);
        assert_eq!(out[1].path, reqs[1].path);
    }

    #[test]
    fn higher_cost_owner_replans_at_crossing() {
        // agent 0 runs along y = 2, agent 1 along x = 2; both reach (2,2) at tick 2
        let g = Grid::new([5, 5, 1]);
        let mut table = ReservationTable::new();
        let p0 = straight(2, 0, 4);
        let p1 = Path::new((0..5).map(|y| Cell::new(2, y, 0)).collect());
        let reqs = vec![
            PathRequest { agent: 1, cost: 5.0, velocity: 1.0, model: MotionModel::Ground4, path: p1.clone() },
            PathRequest { agent: 0, cost: 3.0, velocity: 1.0, model: MotionModel::Ground4, path: p0.clone() },
        ];
        let out = resolve_paths(&g, reqs, &mut table, 0, &HashSet::new());
        assert_eq!(out[0].agent, 0);
        assert!(!out[0].replanned);
        assert_eq!(out[0].path, p0);
        assert_eq!(out[1].agent, 1);
        assert!(out[1].replanned);
        assert_ne!(out[1].path, p1);
        assert_eq!(out[1].path.goal(), Cell::new(2, 4, 0));
        // each (cell, tick) has one holder by construction; check both paths are reserved
        for r in &out {
            assert!(table.first_conflict(&r.path, 1.0, 0, r.agent).is_none());
        }
    }

    #[test]
    fn corridor_without_alternative_waits() {
        // single-lane corridor: the lower-priority agent must wait behind
        let g = Grid::new([6, 1, 1]);
        let mut table = ReservationTable::new();
        let lead = straight(0, 1, 5);
        let follow = straight(0, 0, 4);
        let reqs = vec![
            PathRequest { agent: 0, cost: 1.0, velocity: 1.0, model: MotionModel::Ground4, path: lead },
            PathRequest { agent: 1, cost: 2.0, velocity: 1.0, model: MotionModel::Ground4, path: follow.clone() },
        ];
        let out = resolve_paths(&g, reqs, &mut table, 0, &HashSet::new());
        // follower is one tick behind the leader already, so no change
        assert!(!out[1].replanned);

        let mut table = ReservationTable::new();
        let blocker = Path::new(vec![Cell::new(1, 0, 0); 4]);
        table.reserve_path(&blocker, 1.0, 0, 9).unwrap();
        let req = PathRequest { agent: 1, cost: 2.0, velocity: 1.0, model: MotionModel::Ground4, path: follow.clone() };
        let out = resolve_paths(&g, vec![req], &mut table, 0, &HashSet::new());
        let r = &out[0];
        assert!(r.replanned);
        let arrival = *r.path.schedule(1.0, 0).last().unwrap();
        let original = *follow.schedule(1.0, 0).last().unwrap();
        assert!(r.blocked || arrival >= original + 1);
    }

    #[test]
    fn head_on_hold_evicts_path_through_its_cell() {
        // agent 9 is routed through (1,0) while agent 1 stands there facing it
        let g = Grid::new([3, 1, 1]);
        let mut table = ReservationTable::new();
        table.reserve_path(&straight(0, 2, 0), 1.0, 0, 9).unwrap();
        let req = PathRequest { agent: 1, cost: 2.0, velocity: 1.0, model: MotionModel::Ground4, path: straight(0, 1, 2) };
        let r = resolve_one(&g, &req, &mut table, 0, &HashSet::from([Cell::new(2, 0, 0)]));
        assert!(r.blocked);
        assert_eq!(r.evicted, vec![9]);
        assert_eq!(table.holder(&Cell::new(1, 0, 0), 1), Some(1));
        assert_eq!(table.agent_entries(9), 0);
    }
}
