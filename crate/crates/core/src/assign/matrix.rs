use serde::{Deserialize, Serialize};

use super::AssignError;

/// Agent-by-task travel times in seconds; `f64::INFINITY` marks infeasible pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    n_agents: usize,
    n_tasks: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n_agents: usize, n_tasks: usize, entries: Vec<f64>) -> Result<Self, AssignError> {
        if entries.len() != n_agents * n_tasks {
            return Err(AssignError::Shape {
                rows: n_agents,
                cols: n_tasks,
                len: entries.len(),
            });
        }
        if let Some(bad) = entries.iter().find(|c| c.is_nan() || **c < 0.0) {
            return Err(AssignError::BadEntry(*bad));
        }
        Ok(Self {
            n_agents,
            n_tasks,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(AssignError::Ragged);
        }
        Self::new(n, m, rows.iter().flatten().copied().collect())
    }

    pub fn filled(n_agents: usize, n_tasks: usize, value: f64) -> Self {
        Self {
            n_agents,
            n_tasks,
            entries: vec![value; n_agents * n_tasks],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn is_empty(&self) -> bool {
        self.n_agents == 0 || self.n_tasks == 0
    }

    pub fn get(&self, agent: usize, task: usize) -> f64 {
        self.entries[agent * self.n_tasks + task]
    }

    pub fn set(&mut self, agent: usize, task: usize, value: f64) {
        self.entries[agent * self.n_tasks + task] = value;
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.entries[agent * self.n_tasks..(agent + 1) * self.n_tasks]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut t = Vec::with_capacity(self.entries.len());
        for j in 0..self.n_tasks {
            for i in 0..self.n_agents {
                t.push(self.get(i, j));
            }
        }
        CostMatrix {
            n_agents: self.n_tasks,
            n_tasks: self.n_agents,
            entries: t,
        }
    }

    /// Keeps only the listed task columns, in the given order.
    pub fn select_tasks(&self, tasks: &[usize]) -> CostMatrix {
        let mut e = Vec::with_capacity(self.n_agents * tasks.len());
        for i in 0..self.n_agents {
            for &j in tasks {
                e.push(self.get(i, j));
            }
        }
        CostMatrix {
            n_agents: self.n_agents,
            n_tasks: tasks.len(),
            entries: e,
        }
    }

    pub fn add_to_agent(&mut self, agent: usize, delta: f64) {
        for j in 0..self.n_tasks {
            let v = self.get(agent, j) + delta;
            self.set(agent, j, v);
        }
    }

    pub fn add_to_task(&mut self, task: usize, delta: f64) {
        for i in 0..self.n_agents {
            let v = self.get(i, task) + delta;
            self.set(i, task, v);
        }
    }

    /// Largest finite entry, 0 for an all-infinite or empty matrix.
    pub fn max_finite(&self) -> f64 {
        self.entries
            .iter()
            .filter(|c| c.is_finite())
            .fold(0.0, |a, &b| a.max(b))
    }
}

/// One-to-one agent/task pairs, sorted by agent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self, AssignError> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(AssignError::DuplicateAgent(w[0].0));
            }
        }
        let mut tasks: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        tasks.sort_unstable();
        for w in tasks.windows(2) {
            if w[0] == w[1] {
                return Err(AssignError::DuplicateTask(w[0]));
            }
        }
        Ok(Self { pairs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn task_of(&self, agent: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == agent).map(|p| p.1)
    }
}

/// Sum of the paired costs, in seconds.
pub fn total_cost(c: &CostMatrix, a: &Assignment) -> Result<f64, AssignError> {
    let mut total = 0.0;
    for &(i, j) in a.pairs() {
        if i >= c.n_agents() || j >= c.n_tasks() {
            return Err(AssignError::OutOfBounds { agent: i, task: j });
        }
        let v = c.get(i, j);
        if !v.is_finite() {
            return Err(AssignError::InfeasiblePair { agent: i, task: j });
        }
        total += v;
    }
    Ok(total)
}
