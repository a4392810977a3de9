use serde::{Deserialize, Serialize};

use super::grid::{Cell, Grid, MotionModel};

/// Ordered cells from start to goal. A repeated cell is a one-tick wait.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    cells: Vec<Cell>,
}

/// Tick offset at which the `moves`-th move completes for an agent moving at
/// `velocity` cells per second, counting distance with a floor rule.
pub fn move_tick(moves: u32, velocity: f64) -> u64 {
    if moves == 0 {
        return 0;
    }
    (moves as f64 / velocity - 1e-9).ceil().max(0.0) as u64
}

impl Path {
    pub fn new(cells: Vec<Cell>) -> Self {
        assert!(!cells.is_empty(), "a path holds at least its start cell");
        Self { cells }
    }

    pub fn stationary(at: Cell) -> Self {
        Self { cells: vec![at] }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().unwrap()
    }

    /// Number of cell-to-cell moves; waits are not counted.
    pub fn moves(&self) -> usize {
        self.cells.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn waits(&self) -> usize {
        self.cells.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Traveled distance in meters.
    pub fn length(&self) -> f64 {
        self.moves() as f64
    }

    /// Prepends a one-tick wait at the start cell.
    pub fn with_leading_wait(&self) -> Path {
        let mut cells = Vec::with_capacity(self.cells.len() + 1);
        cells.push(self.cells[0]);
        cells.extend_from_slice(&self.cells);
        Path { cells }
    }

    /// Absolute tick at which each cell of the path is occupied.
    pub fn schedule(&self, velocity: f64, start_tick: u64) -> Vec<u64> {
        let mut ticks = Vec::with_capacity(self.cells.len());
        let (mut moves, mut waits) = (0u32, 0u64);
        ticks.push(start_tick);
        for w in self.cells.windows(2) {
            if w[0] == w[1] {
                waits += 1;
            } else {
                moves += 1;
            }
            ticks.push(start_tick + waits + move_tick(moves, velocity));
        }
        ticks
    }

    /// Consecutive cells are neighbors (or waits) and nothing is an obstacle.
    pub fn is_valid(&self, grid: &Grid, model: MotionModel) -> bool {
        self.cells
            .iter()
            .all(|c| grid.is_free(c) && model.admits(c))
            && self
                .cells
                .windows(2)
                .all(|w| w[0] == w[1] || w[0].is_adjacent(&w[1]))
    }
}

/// Travel time in seconds for a path of `distance` meters at `velocity` m/s.
pub fn path_cost(distance: f64, velocity: f64) -> Result<f64, super::PlanError> {
    if !(velocity > 0.0) || !velocity.is_finite() {
        return Err(super::PlanError::Velocity(velocity));
    }
    if !(distance >= 0.0) {
        return Err(super::PlanError::Distance(distance));
    }
    Ok(distance / velocity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_cost_examples() {
        assert_eq!(path_cost(15.0, 5.0).unwrap(), 3.0);
        assert_eq!(path_cost(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(path_cost(3.0, 3.0).unwrap(), 1.0);
        assert!(path_cost(3.0, 0.0).is_err());
        assert!(path_cost(3.0, -1.0).is_err());
    }

    #[test]
    fn schedule_follows_floor_rule() {
        let p = Path::new((0..=3).map(|x| Cell::new(x, 0, 0)).collect());
        assert_eq!(p.schedule(3.0, 10), vec![10, 11, 11, 11]);
        assert_eq!(p.schedule(1.0, 0), vec![0, 1, 2, 3]);
        let waited = p.with_leading_wait();
        assert_eq!(waited.schedule(3.0, 0), vec![0, 1, 2, 2, 2]);
        assert_eq!(waited.length(), 3.0);
        assert_eq!(waited.waits(), 1);
    }

    #[test]
    fn fractional_velocity() {
        assert_eq!(move_tick(1, 2.5), 1);
        assert_eq!(move_tick(2, 2.5), 1);
        assert_eq!(move_tick(3, 2.5), 2);
        assert_eq!(move_tick(5, 2.5), 2);
        assert_eq!(move_tick(6, 2.5), 3);
    }
}
