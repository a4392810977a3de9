use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Cell, Grid, MotionModel};
use super::path::Path;
use super::PlanError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtParams {
    pub max_iters: usize,
    /// Rewiring neighborhood, in cells.
    pub rewire_radius: f64,
    /// Longest tree extension per iteration, in cells.
    pub step: f64,
    pub goal_bias: f64,
}

impl Default for RrtParams {
    fn default() -> Self {
        Self {
            max_iters: 1500,
            rewire_radius: 6.0,
            step: 4.0,
            goal_bias: 0.1,
        }
    }
}

/// Cells visited by an axis-stepping ray from `a` to `b`, both included.
/// Every step changes exactly one coordinate, so the walk is a valid
/// 6-connected (or 4-connected in a plane) path of Manhattan length.
pub fn grid_ray(a: Cell, b: Cell) -> Vec<Cell> {
    let d = [b.x - a.x, b.y - a.y, b.z - a.z];
    let steps = d.iter().map(|v| v.unsigned_abs()).sum::<u32>() as usize;
    let mut cells = Vec::with_capacity(steps + 1);
    let mut cur = [a.x, a.y, a.z];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for k in 0..3 {
        if d[k] != 0 {
            t_delta[k] = 1.0 / d[k].abs() as f64;
            t_max[k] = 0.5 * t_delta[k];
        }
    }
    cells.push(a);
    for _ in 0..steps {
        let mut axis = 0;
        for k in 1..3 {
            // small tolerance keeps ties resolving in fixed axis order
            if t_max[k] < t_max[axis] - 1e-12 {
                axis = k;
            }
        }
        cur[axis] += d[axis].signum();
        t_max[axis] += t_delta[axis];
        cells.push(Cell::new(cur[0], cur[1], cur[2]));
    }
    debug_assert_eq!(*cells.last().unwrap(), b);
    cells
}

fn line_of_sight(grid: &Grid, model: MotionModel, a: Cell, b: Cell) -> bool {
    grid_ray(a, b)
        .iter()
        .all(|c| grid.is_free(c) && model.admits(c))
}

#[derive(Clone, Debug)]
struct Node {
    cell: Cell,
    parent: Option<usize>,
    cost: u32,
    children: Vec<usize>,
}

/// Sampling-based planner on grid cells with rewiring. Edge cost is the
/// Manhattan length of the ray between cells, i.e. the moves it expands to.
pub fn rrt_star(
    grid: &Grid,
    start: Cell,
    goal: Cell,
    model: MotionModel,
    params: &RrtParams,
    seed: u64,
) -> Result<Path, PlanError> {
    for c in [start, goal] {
        if !grid.is_free(&c) || !model.admits(&c) {
            return Err(PlanError::Endpoint(c));
        }
    }
    if !(params.max_iters > 0 && params.rewire_radius > 0.0 && params.step > 0.0) {
        return Err(PlanError::Params);
    }
    if start == goal {
        return Ok(Path::stationary(start));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = grid.dims();
    let mut nodes = vec![Node {
        cell: start,
        parent: None,
        cost: 0,
        children: Vec::new(),
    }];
    let mut goal_node: Option<usize> = None;

    for _ in 0..params.max_iters {
        let sample = if rng.gen::<f64>() < params.goal_bias {
            goal
        } else {
            let z = match model {
                MotionModel::Ground4 => 0,
                MotionModel::Aerial6 => rng.gen_range(0..dims[2] as i32),
            };
            Cell::new(
                rng.gen_range(0..dims[0] as i32),
                rng.gen_range(0..dims[1] as i32),
                z,
            )
        };
        if !grid.is_free(&sample) {
            continue;
        }
        let nearest = nearest(&nodes, &sample);
        let new_cell = steer(nodes[nearest].cell, sample, params.step);
        if new_cell == nodes[nearest].cell || !grid.is_free(&new_cell) {
            continue;
        }
        if nodes.iter().any(|n| n.cell == new_cell) {
            continue;
        }
        if !line_of_sight(grid, model, nodes[nearest].cell, new_cell) {
            continue;
        }
        let near: Vec<usize> = (0..nodes.len())
            .filter(|&i| nodes[i].cell.euclidean(&new_cell) <= params.rewire_radius)
            .collect();
        let mut best_parent = nearest;
        let mut best_cost = nodes[nearest].cost + nodes[nearest].cell.manhattan(&new_cell);
        for &i in &near {
            let c = nodes[i].cost + nodes[i].cell.manhattan(&new_cell);
            if c < best_cost && line_of_sight(grid, model, nodes[i].cell, new_cell) {
                best_cost = c;
                best_parent = i;
            }
        }
        let id = nodes.len();
        nodes.push(Node {
            cell: new_cell,
            parent: Some(best_parent),
            cost: best_cost,
            children: Vec::new(),
        });
        nodes[best_parent].children.push(id);

        for &i in &near {
            if i == best_parent || Some(i) == nodes[id].parent {
                continue;
            }
            let via = best_cost + new_cell.manhattan(&nodes[i].cell);
            if via < nodes[i].cost && !is_ancestor(&nodes, i, id) && line_of_sight(grid, model, new_cell, nodes[i].cell) {
                reparent(&mut nodes, i, id, via);
            }
        }

        if new_cell == goal {
            goal_node = Some(id);
        }
    }

    let goal_id = goal_node.ok_or(PlanError::NoPath { start, goal })?;
    let mut chain = vec![goal_id];
    while let Some(p) = nodes[*chain.last().unwrap()].parent {
        chain.push(p);
    }
    chain.reverse();
    let mut cells = vec![start];
    for w in chain.windows(2) {
        cells.extend(grid_ray(nodes[w[0]].cell, nodes[w[1]].cell).into_iter().skip(1));
    }
    Ok(Path::new(cells))
}

fn nearest(nodes: &[Node], target: &Cell) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, n) in nodes.iter().enumerate() {
        let d = n.cell.euclidean(target);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn steer(from: Cell, to: Cell, step: f64) -> Cell {
    let d = from.euclidean(&to);
    if d <= step {
        return to;
    }
    let s = step / d;
    Cell::new(
        from.x + ((to.x - from.x) as f64 * s).round() as i32,
        from.y + ((to.y - from.y) as f64 * s).round() as i32,
        from.z + ((to.z - from.z) as f64 * s).round() as i32,
    )
}

fn is_ancestor(nodes: &[Node], candidate: usize, of: usize) -> bool {
    let mut cur = nodes[of].parent;
    while let Some(p) = cur {
        if p == candidate {
            return true;
        }
        cur = nodes[p].parent;
    }
    false
}

fn reparent(nodes: &mut [Node], child: usize, new_parent: usize, new_cost: u32) {
    if let Some(old) = nodes[child].parent {
        nodes[old].children.retain(|&c| c != child);
    }
    nodes[child].parent = Some(new_parent);
    nodes[new_parent].children.push(child);
    let delta = nodes[child].cost - new_cost;
    let mut stack = vec![child];
    while let Some(n) = stack.pop() {
        nodes[n].cost -= delta;
        stack.extend(nodes[n].children.iter().copied());
    }
}
