use std::collections::HashMap;

use super::grid::Cell;
use super::path::Path;

/// Space-time occupancy: at most one agent per (cell, tick).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReservationTable {
    slots: HashMap<(Cell, u64), usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("cell {cell} at tick {tick} already reserved by agent {holder}")]
pub struct ReservationConflict {
    pub cell: Cell,
    pub tick: u64,
    pub holder: usize,
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn holder(&self, cell: &Cell, tick: u64) -> Option<usize> {
        self.slots.get(&(*cell, tick)).copied()
    }

    /// Free, or already held by `agent`.
    pub fn is_free_for(&self, cell: &Cell, tick: u64, agent: usize) -> bool {
        self.holder(cell, tick).is_none_or(|h| h == agent)
    }

    pub fn reserve(&mut self, cell: Cell, tick: u64, agent: usize) -> Result<(), ReservationConflict> {
        match self.slots.get(&(cell, tick)) {
            Some(&holder) if holder != agent => Err(ReservationConflict { cell, tick, holder }),
            _ => {
                self.slots.insert((cell, tick), agent);
                Ok(())
            }
        }
    }

    /// First (cell, tick) along a scheduled path held by someone else.
    pub fn first_conflict(
        &self,
        path: &Path,
        velocity: f64,
        start_tick: u64,
        agent: usize,
    ) -> Option<ReservationConflict> {
        let ticks = path.schedule(velocity, start_tick);
        path.cells().iter().zip(ticks).find_map(|(c, t)| match self.holder(c, t) {
            Some(holder) if holder != agent => Some(ReservationConflict {
                cell: *c,
                tick: t,
                holder,
            }),
            _ => None,
        })
    }

    /// Reserves every (cell, tick) of a scheduled path, or nothing on conflict.
    pub fn reserve_path(
        &mut self,
        path: &Path,
        velocity: f64,
        start_tick: u64,
        agent: usize,
    ) -> Result<(), ReservationConflict> {
        if let Some(c) = self.first_conflict(path, velocity, start_tick, agent) {
            return Err(c);
        }
        let ticks = path.schedule(velocity, start_tick);
        for (c, t) in path.cells().iter().zip(ticks) {
            self.slots.insert((*c, t), agent);
        }
        Ok(())
    }

    pub fn release_agent(&mut self, agent: usize) {
        self.slots.retain(|_, a| *a != agent);
    }

    /// Drops reservations held by `agent` strictly after `tick`.
    pub fn release_after(&mut self, agent: usize, tick: u64) {
        self.slots.retain(|(_, t), a| *a != agent || *t <= tick);
    }

    pub fn release_before(&mut self, tick: u64) {
        self.slots.retain(|(_, t), _| *t >= tick);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Cell, u64), &usize)> {
        self.slots.iter()
    }

    pub fn agent_entries(&self, agent: usize) -> usize {
        self.slots.values().filter(|a| **a == agent).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_booking_is_refused() {
        let mut t = ReservationTable::new();
        let c = Cell::new(1, 1, 0);
        t.reserve(c, 3, 0).unwrap();
        t.reserve(c, 3, 0).unwrap();
        let err = t.reserve(c, 3, 1).unwrap_err();
        assert_eq!(err.holder, 0);
        assert_eq!(t.len(), 1);
        assert!(t.is_free_for(&c, 4, 1));
    }

    #[test]
    fn path_reservation_is_atomic() {
        let mut t = ReservationTable::new();
        t.reserve(Cell::new(2, 0, 0), 2, 9).unwrap();
        let p = Path::new((0..=3).map(|x| Cell::new(x, 0, 0)).collect());
        assert!(t.reserve_path(&p, 1.0, 0, 1).is_err());
        assert_eq!(t.len(), 1);
        t.reserve_path(&p, 1.0, 5, 1).unwrap();
        assert_eq!(t.agent_entries(1), 4);
        t.release_after(1, 6);
        assert_eq!(t.agent_entries(1), 2);
        t.release_agent(1);
        assert_eq!(t.len(), 1);
    }
}
