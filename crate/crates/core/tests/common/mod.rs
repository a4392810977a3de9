#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taskalloc::assign::CostMatrix;
use taskalloc::pathplan::{Cell, Grid, MotionModel};
use taskalloc::policy::{ExecutionMode, PolicyParams};
use taskalloc::ppo::{collect_episode, minibatch_loss, PpoConfig, DECISION_DT};
use taskalloc::tensor::{Tape, Tensor};
use taskalloc::world::{advance, arbitrate, init_episode, spawn_tasks, AgentStatus, EpisodeState, WorldConfig};

/// Shortest move count by Dijkstra with unit edges, or `None` if unreachable.
pub fn dijkstra(grid: &Grid, start: Cell, goal: Cell, model: MotionModel) -> Option<u32> {
    let steps: &[(i32, i32, i32)] = match model {
        MotionModel::Ground4 => &[(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)],
        MotionModel::Aerial6 => &[(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)],
    };
    let ok = |c: &Cell| grid.in_bounds(c) && !grid.is_blocked(c) && (model == MotionModel::Aerial6 || c.z == 0);
    if !ok(&start) || !ok(&goal) {
        return None;
    }
    let mut dist: HashMap<Cell, u32> = HashMap::from([(start, 0)]);
    let mut heap = BinaryHeap::from([Reverse((0u32, start))]);
    while let Some(Reverse((d, c))) = heap.pop() {
        if c == goal {
            return Some(d);
        }
        if dist.get(&c).is_some_and(|&best| best < d) {
            continue;
        }
        for &(dx, dy, dz) in steps {
            let n = Cell::new(c.x + dx, c.y + dy, c.z + dz);
            if ok(&n) && dist.get(&n).is_none_or(|&best| d + 1 < best) {
                dist.insert(n, d + 1);
                heap.push(Reverse((d + 1, n)));
            }
        }
    }
    None
}

pub fn random_grid(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> Grid {
    let mut g = Grid::new(dims);
    for i in 0..g.n_cells() {
        if rng.gen::<f64>() < density {
            let c = g.cell_at(i);
            g.set_blocked(&c, true);
        }
    }
    g
}

/// Uniform free cell admitted by `model`.
pub fn random_free_cell(rng: &mut ChaCha8Rng, grid: &Grid, model: MotionModel) -> Cell {
    let [dx, dy, dz] = grid.dims();
    loop {
        let z = if model == MotionModel::Ground4 { 0 } else { rng.gen_range(0..dz as i32) };
        let c = Cell::new(rng.gen_range(0..dx as i32), rng.gen_range(0..dy as i32), z);
        if grid.is_free(&c) {
            return c;
        }
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize, hi: f64) -> CostMatrix {
    CostMatrix::new(n, m, (0..n * m).map(|_| rng.gen_range(0.0..hi)).collect()).unwrap()
}

/// Largest relative gap between the tape gradient of the PPO loss and central
/// differences, over every parameter of the encoder, actor and critic.
///
/// Parameters are jittered to a generic point first. If a probe straddles a
/// ReLU kink (one-sided slopes disagree far beyond curvature), the check
/// restarts from a new point. Returns (error, restarts).
pub fn ppo_gradient_error(seed: u64) -> (f64, usize) {
    for restart in 0..8 {
        if let Some(err) = gradient_error_at(seed, restart) {
            return (err, restart as usize);
        }
    }
    panic!("no kink-free point found for seed {seed}");
}

fn gradient_error_at(seed: u64, restart: u64) -> Option<f64> {
    let mut world = WorldConfig::static_scenario(2);
    world.grid_dims = [8, 8, 3];
    world.obstacle_density = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PolicyParams::init(2, 2, Default::default(), &mut rng);
    let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ (restart << 40) ^ 0x6a17);
    let jittered: Vec<Tensor> = params
        .tensors()
        .into_iter()
        .map(|mut t| {
            t.data_mut().iter_mut().for_each(|v| *v += jitter.gen_range(-0.1..0.1));
            t
        })
        .collect();
    params.set_tensors(&jittered).unwrap();
    let buf = collect_episode(&params, &world, seed, 0.99, 0.95).unwrap();
    let idx: Vec<usize> = (0..buf.len()).collect();
    let advantages: Vec<f64> = buf.transitions.iter().map(|t| t.advantage + rng.gen_range(-0.5..0.5)).collect();
    let cfg = PpoConfig::default();

    let loss_at = |p: &PolicyParams| {
        let mut tape = Tape::new();
        let out = minibatch_loss(&mut tape, p, &buf, &idx, &advantages, &cfg).unwrap();
        tape.value(out.loss).item()
    };
    let mut tape = Tape::new();
    let out = minibatch_loss(&mut tape, &params, &buf, &idx, &advantages, &cfg).unwrap();
    let center = tape.value(out.loss).item();
    let grads = tape.backward(out.loss).unwrap().collect(&out.params);

    let base = params.tensors();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for (ti, (t, g)) in base.iter().zip(&grads).enumerate() {
        for k in 0..t.len() {
            let mut shifted: Vec<Tensor> = base.clone();
            let pos = t.data()[k];
            shifted[ti].data_mut()[k] = pos + h;
            probe.set_tensors(&shifted).unwrap();
            let up = loss_at(&probe);
            shifted[ti].data_mut()[k] = pos - h;
            probe.set_tensors(&shifted).unwrap();
            let down = loss_at(&probe);
            let (fwd, bwd) = ((up - center) / h, (center - down) / h);
            if (fwd - bwd).abs() > 1e-3 {
                return None;
            }
            let numeric = (up - down) / (2.0 * h);
            let analytic = g.data()[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    Some(worst)
}

/// Counts of safety violations seen while stepping one episode.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct SafetyTally {
    pub ticks: usize,
    pub double_held_tasks: usize,
    pub double_bookings: usize,
    pub unreserved_steps: usize,
    pub invariant_errors: usize,
}

impl SafetyTally {
    pub fn clean(&self) -> bool {
        self.double_held_tasks == 0 && self.double_bookings == 0 && self.unreserved_steps == 0 && self.invariant_errors == 0
    }

    pub fn add(&mut self, o: SafetyTally) {
        self.ticks += o.ticks;
        self.double_held_tasks += o.double_held_tasks;
        self.double_bookings += o.double_bookings;
        self.unreserved_steps += o.unreserved_steps;
        self.invariant_errors += o.invariant_errors;
    }
}

fn audit(state: &EpisodeState, tally: &mut SafetyTally) {
    tally.ticks += 1;
    let mut holders: HashMap<usize, usize> = HashMap::new();
    for a in &state.agents {
        if let Some(t) = a.assigned_task {
            *holders.entry(t).or_default() += 1;
        }
    }
    tally.double_held_tasks += holders.values().filter(|&&k| k > 1).count();
    let now = state.tick();
    let mut claims: HashMap<(Cell, u64), usize> = HashMap::new();
    for a in &state.agents {
        let Some(path) = &a.current_path else { continue };
        for k in a.path_pos..path.cells().len() {
            let tick = a.schedule[k];
            if tick < now {
                continue;
            }
            let cell = path.cells()[k];
            if let Some(other) = claims.insert((cell, tick), a.id) {
                if other != a.id {
                    tally.double_bookings += 1;
                }
            }
            if state.reservations.holder(&cell, tick) != Some(a.id) {
                tally.unreserved_steps += 1;
            }
        }
    }
    if state.check_invariants().is_err() {
        tally.invariant_errors += 1;
    }
}

/// Steps an episode with `policy` (stochastic) or uniformly random actions
/// and audits every tick.
pub fn safety_sweep(world: &WorldConfig, seed: u64, policy: Option<&PolicyParams>) -> SafetyTally {
    let mut state = init_episode(world, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let mut tally = SafetyTally::default();
    while !state.is_terminal() {
        if state.needs_decision() {
            let actions = match policy {
                Some(p) => p.decide(&mut state, ExecutionMode::Eval, true, &mut rng).unwrap().actions,
                None => {
                    let m = state.m_max();
                    state
                        .agents
                        .iter()
                        .map(|a| if a.status == AgentStatus::Idle { rng.gen_range(0..=m) } else { 0 })
                        .collect()
                }
            };
            if arbitrate(&mut state, &actions).is_err() {
                tally.invariant_errors += 1;
                break;
            }
        }
        audit(&state, &mut tally);
        advance(&mut state, DECISION_DT);
        spawn_tasks(&mut state);
        audit(&state, &mut tally);
    }
    tally
}
