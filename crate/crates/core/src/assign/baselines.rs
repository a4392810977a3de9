use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{Assignment, CostMatrix};
use super::AssignError;

/// Largest min(n, m) accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_DIM: usize = 8;
const BRUTE_FORCE_MAX_LEAVES: f64 = 5e7;

/// Takes the globally cheapest finite pair, removes its row and column, repeats.
/// Ties go to the smaller (agent, task).
pub fn greedy(c: &CostMatrix) -> Assignment {
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..c.n_agents() {
        for j in 0..c.n_tasks() {
            let v = c.get(i, j);
            if v.is_finite() {
                entries.push((v, i, j));
            }
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_used = vec![false; c.n_agents()];
    let mut col_used = vec![false; c.n_tasks()];
    let mut pairs = Vec::new();
    for (_, i, j) in entries {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            pairs.push((i, j));
        }
    }
    Assignment::new(pairs).expect("greedy never repeats a row or column")
}

/// Agents in id order each take their cheapest remaining finite task.
pub fn greedy_per_agent(c: &CostMatrix) -> Assignment {
    let mut col_used = vec![false; c.n_tasks()];
    let mut pairs = Vec::new();
    for i in 0..c.n_agents() {
        let pick = (0..c.n_tasks())
            .filter(|&j| !col_used[j] && c.get(i, j).is_finite())
            .min_by(|&a, &b| c.get(i, a).total_cmp(&c.get(i, b)).then(a.cmp(&b)));
        if let Some(j) = pick {
            col_used[j] = true;
            pairs.push((i, j));
        }
    }
    Assignment::new(pairs).expect("each task is taken once")
}

/// Maximal matching over finite pairs: agents in random order each take a
/// uniformly random remaining feasible task.
pub fn random_assign(c: &CostMatrix, seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..c.n_agents()).collect();
    order.shuffle(&mut rng);
    let mut col_used = vec![false; c.n_tasks()];
    let mut pairs = Vec::new();
    for i in order {
        let options: Vec<usize> = (0..c.n_tasks())
            .filter(|&j| !col_used[j] && c.get(i, j).is_finite())
            .collect();
        if options.is_empty() {
            continue;
        }
        let j = options[rng.gen_range(0..options.len())];
        col_used[j] = true;
        pairs.push((i, j));
    }
    Assignment::new(pairs).expect("each task is taken once")
}

/// Exhaustive minimum over all matchings of size min(n, m). Ties keep the
/// lexicographically first matching found.
pub fn brute_force(c: &CostMatrix) -> Result<Assignment, AssignError> {
    if c.is_empty() {
        return Ok(Assignment::empty());
    }
    let transposed = c.n_agents() > c.n_tasks();
    let work = if transposed { c.transpose() } else { c.clone() };
    let (n, m) = (work.n_agents(), work.n_tasks());
    let leaves: f64 = (0..n).map(|k| (m - k) as f64).product();
    if n > BRUTE_FORCE_MAX_DIM || leaves > BRUTE_FORCE_MAX_LEAVES {
        return Err(AssignError::TooLarge {
            rows: c.n_agents(),
            cols: c.n_tasks(),
        });
    }
    let mut search = Search {
        c: &work,
        used: vec![false; m],
        current: Vec::with_capacity(n),
        best: None,
    };
    search.descend(0, 0.0);
    let Some((_, cols)) = search.best else {
        return Err(if transposed {
            AssignError::InfeasibleTask(0)
        } else {
            AssignError::InfeasibleAgent(0)
        });
    };
    let pairs = cols
        .iter()
        .enumerate()
        .map(|(i, &j)| if transposed { (j, i) } else { (i, j) })
        .collect();
    Assignment::new(pairs)
}

struct Search<'a> {
    c: &'a CostMatrix,
    used: Vec<bool>,
    current: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, row: usize, partial: f64) {
        if let Some((b, _)) = &self.best {
            // costs are nonnegative, so a partial sum at the bound cannot win
            if partial >= *b {
                return;
            }
        }
        if row == self.c.n_agents() {
            self.best = Some((partial, self.current.clone()));
            return;
        }
        for j in 0..self.c.n_tasks() {
            let v = self.c.get(row, j);
            if self.used[j] || !v.is_finite() {
                continue;
            }
            self.used[j] = true;
            self.current.push(j);
            self.descend(row + 1, partial + v);
            self.current.pop();
            self.used[j] = false;
        }
    }
}
