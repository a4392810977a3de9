//! Agent–task graph construction and the two-layer graph convolution encoder.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assign::CostMatrix;
use crate::tensor::{glorot_uniform, matmul, Checkpoint, Sparse, Tape, Tensor, TensorError, Var};
use crate::world::{local_observation, EpisodeState, TaskStatus};

/// Embedding width of every node after projection.
pub const HIDDEN: usize = 6;
/// Features per task node: location (3) and the Assigned flag.
pub const TASK_FEATURES: usize = 4;

/// Agent node width: position (3), status, velocity, and one cost per slot.
pub fn agent_feature_width(m_max: usize) -> usize {
    5 + m_max
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    /// Aggregate with weights 1 / (1 + c); false gives a plain mean.
    pub weighted: bool,
    /// Adds agent–agent edges between agents closer than this many meters.
    pub comm_radius: Option<f64>,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            weighted: true,
            comm_radius: None,
        }
    }
}

/// Nodes are agents followed by live tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    /// N × (5 + m_max).
    pub agent_features: Tensor,
    /// M_live × 4.
    pub task_features: Tensor,
    /// Policy slot of each task node.
    pub task_slots: Vec<usize>,
    /// (agent, task node, weight) for every finite-cost pair.
    pub edges: Vec<(usize, usize, f64)>,
    /// Undirected agent pairs within the communication radius.
    pub agent_edges: Vec<(usize, usize)>,
    pub m_max: usize,
}

impl HeteroGraph {
    pub fn n_agents(&self) -> usize {
        self.agent_features.rows()
    }

    pub fn n_tasks(&self) -> usize {
        self.task_slots.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_agents() + self.n_tasks()
    }

    /// Row-normalized aggregation matrix with self-loops over all nodes.
    pub fn aggregation(&self, weighted: bool) -> Vec<(usize, usize, f64)> {
        let n = self.n_agents();
        let mut nbrs: Vec<Vec<(usize, f64)>> = (0..self.n_nodes()).map(|u| vec![(u, 1.0)]).collect();
        for &(i, k, w) in &self.edges {
            let w = if weighted { w } else { 1.0 };
            nbrs[i].push((n + k, w));
            nbrs[n + k].push((i, w));
        }
        for &(a, b) in &self.agent_edges {
            nbrs[a].push((b, 1.0));
            nbrs[b].push((a, 1.0));
        }
        let mut out = Vec::new();
        for (u, list) in nbrs.iter().enumerate() {
            let total: f64 = list.iter().map(|(_, w)| w).sum();
            out.extend(list.iter().map(|&(v, w)| (u, v, w / total)));
        }
        out
    }

    /// Task features placed at their slots, zero elsewhere: 4 · m_max values.
    pub fn padded_task_features(&self) -> Vec<f64> {
        let mut out = vec![0.0; TASK_FEATURES * self.m_max];
        for (k, &slot) in self.task_slots.iter().enumerate() {
            out[slot * TASK_FEATURES..(slot + 1) * TASK_FEATURES].copy_from_slice(self.task_features.row_slice(k));
        }
        out
    }
}

/// Builds the graph for the current state. Done tasks are left out.
pub fn build_graph(state: &EpisodeState, c: &CostMatrix, config: &GnnConfig) -> HeteroGraph {
    let m_max = state.m_max();
    let dims = state.grid.dims();
    let norm = |v: i32, d: usize| v as f64 / (d.max(2) - 1) as f64;
    let vmax = state.config.ground_velocity.max(state.config.aerial_velocity);
    let mut agent_data = Vec::with_capacity(state.agents.len() * agent_feature_width(m_max));
    for a in &state.agents {
        let obs = local_observation(state, a.id, m_max).expect("agent ids are dense");
        agent_data.extend_from_slice(&[
            norm(a.position.x, dims[0]),
            norm(a.position.y, dims[1]),
            norm(a.position.z, dims[2]),
            obs[0],
            a.velocity / vmax,
        ]);
        agent_data.extend_from_slice(&obs[1..]);
    }
    let mut task_data = Vec::new();
    let mut task_slots = Vec::new();
    for slot in 0..m_max {
        let Some(t) = state.slot_task(slot) else { continue };
        if t.status == TaskStatus::Done {
            continue;
        }
        task_slots.push(slot);
        task_data.extend_from_slice(&[
            norm(t.location.x, dims[0]),
            norm(t.location.y, dims[1]),
            norm(t.location.z, dims[2]),
            if t.status == TaskStatus::Assigned { 1.0 } else { 0.0 },
        ]);
    }
    let mut edges = Vec::new();
    for i in 0..state.agents.len() {
        for (k, &slot) in task_slots.iter().enumerate() {
            let cost = if slot < c.n_tasks() { c.get(i, slot) } else { f64::INFINITY };
            if cost.is_finite() {
                edges.push((i, k, 1.0 / (1.0 + cost)));
            }
        }
    }
    let mut agent_edges = Vec::new();
    if let Some(r) = config.comm_radius {
        for i in 0..state.agents.len() {
            for j in i + 1..state.agents.len() {
                if state.agents[i].position.euclidean(&state.agents[j].position) <= r {
                    agent_edges.push((i, j));
                }
            }
        }
    }
    HeteroGraph {
        agent_features: Tensor::matrix(state.agents.len(), agent_feature_width(m_max), agent_data).unwrap(),
        task_features: Tensor::matrix(task_slots.len(), TASK_FEATURES, task_data).unwrap(),
        task_slots,
        edges,
        agent_edges,
        m_max,
    }
}

/// Encoder weights. Weight matrices are stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    pub agent_w: Tensor,
    pub agent_b: Tensor,
    pub task_w: Tensor,
    pub task_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

pub const GCN_PARAM_NAMES: [&str; 8] = [
    "gcn.agent_w",
    "gcn.agent_b",
    "gcn.task_w",
    "gcn.task_b",
    "gcn.w1",
    "gcn.b1",
    "gcn.w2",
    "gcn.b2",
];

impl GcnParams {
    pub fn init<R: Rng>(m_max: usize, rng: &mut R) -> Self {
        Self {
            agent_w: glorot_uniform(agent_feature_width(m_max), HIDDEN, rng),
            agent_b: Tensor::zeros(1, HIDDEN),
            task_w: glorot_uniform(TASK_FEATURES, HIDDEN, rng),
            task_b: Tensor::zeros(1, HIDDEN),
            w1: glorot_uniform(HIDDEN, HIDDEN, rng),
            b1: Tensor::zeros(1, HIDDEN),
            w2: glorot_uniform(HIDDEN, HIDDEN, rng),
            b2: Tensor::zeros(1, HIDDEN),
        }
    }

    pub fn zeros(m_max: usize) -> Self {
        Self {
            agent_w: Tensor::zeros(agent_feature_width(m_max), HIDDEN),
            agent_b: Tensor::zeros(1, HIDDEN),
            task_w: Tensor::zeros(TASK_FEATURES, HIDDEN),
            task_b: Tensor::zeros(1, HIDDEN),
            w1: Tensor::zeros(HIDDEN, HIDDEN),
            b1: Tensor::zeros(1, HIDDEN),
            w2: Tensor::zeros(HIDDEN, HIDDEN),
            b2: Tensor::zeros(1, HIDDEN),
        }
    }

    pub fn m_max(&self) -> usize {
        self.agent_w.rows() - 5
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        vec![
            self.agent_w.clone(),
            self.agent_b.clone(),
            self.task_w.clone(),
            self.task_b.clone(),
            self.w1.clone(),
            self.b1.clone(),
            self.w2.clone(),
            self.b2.clone(),
        ]
    }

    pub fn from_tensors(t: &[Tensor]) -> Result<Self, TensorError> {
        let [agent_w, agent_b, task_w, task_b, w1, b1, w2, b2] = t else {
            return Err(TensorError::Checkpoint(format!("gcn needs 8 tensors, got {}", t.len())));
        };
        let p = Self {
            agent_w: agent_w.clone(),
            agent_b: agent_b.clone(),
            task_w: task_w.clone(),
            task_b: task_b.clone(),
            w1: w1.clone(),
            b1: b1.clone(),
            w2: w2.clone(),
            b2: b2.clone(),
        };
        let reference = Self::zeros(p.m_max());
        for (a, b) in p.tensors().iter().zip(reference.tensors()) {
            if a.shape() != b.shape() {
                return Err(TensorError::Shape {
                    op: "gcn params",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
        }
        Ok(p)
    }

    pub fn write(&self, c: &mut Checkpoint) {
        for (name, t) in GCN_PARAM_NAMES.iter().zip(self.tensors()) {
            c.insert(name, &t);
        }
    }

    pub fn read(c: &Checkpoint) -> Result<Self, TensorError> {
        let t: Result<Vec<Tensor>, _> = GCN_PARAM_NAMES.iter().map(|n| c.get(n)).collect();
        Self::from_tensors(&t?)
    }
}

/// Encoder weights recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GcnVars {
    pub agent_w: Var,
    pub agent_b: Var,
    pub task_w: Var,
    pub task_b: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl GcnVars {
    pub fn record(tape: &mut Tape, p: &GcnParams) -> Result<Self, TensorError> {
        Ok(Self {
            agent_w: tape.leaf(p.agent_w.clone())?,
            agent_b: tape.leaf(p.agent_b.clone())?,
            task_w: tape.leaf(p.task_w.clone())?,
            task_b: tape.leaf(p.task_b.clone())?,
            w1: tape.leaf(p.w1.clone())?,
            b1: tape.leaf(p.b1.clone())?,
            w2: tape.leaf(p.w2.clone())?,
            b2: tape.leaf(p.b2.clone())?,
        })
    }

    pub fn list(&self) -> Vec<Var> {
        vec![self.agent_w, self.agent_b, self.task_w, self.task_b, self.w1, self.b1, self.w2, self.b2]
    }
}

/// Several graphs merged into one disconnected graph for a single pass.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub agent_features: Tensor,
    pub task_features: Tensor,
    place_agents: Rc<Sparse>,
    place_tasks: Rc<Sparse>,
    adjacency: Rc<Sparse>,
    agent_rows: Vec<usize>,
    /// First agent row of each graph in the stacked agent output.
    pub agent_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&HeteroGraph], weighted: bool) -> Self {
        let width = graphs.first().map_or(0, |g| g.agent_features.cols());
        let total_agents: usize = graphs.iter().map(|g| g.n_agents()).sum();
        let total_tasks: usize = graphs.iter().map(|g| g.n_tasks()).sum();
        let total_nodes = total_agents + total_tasks;
        let mut agent_data = Vec::with_capacity(total_agents * width);
        let mut task_data = Vec::with_capacity(total_tasks * TASK_FEATURES);
        let (mut pa, mut pt, mut adj, mut agent_rows, mut agent_offsets) = (vec![], vec![], vec![], vec![], vec![]);
        let (mut node0, mut a0, mut t0) = (0, 0, 0);
        for g in graphs {
            assert_eq!(g.agent_features.cols(), width, "graphs in a batch share m_max");
            agent_data.extend_from_slice(g.agent_features.data());
            task_data.extend_from_slice(g.task_features.data());
            agent_offsets.push(a0);
            for i in 0..g.n_agents() {
                pa.push((node0 + i, a0 + i, 1.0));
                agent_rows.push(node0 + i);
            }
            for k in 0..g.n_tasks() {
                pt.push((node0 + g.n_agents() + k, t0 + k, 1.0));
            }
            adj.extend(g.aggregation(weighted).into_iter().map(|(u, v, w)| (node0 + u, node0 + v, w)));
            node0 += g.n_nodes();
            a0 += g.n_agents();
            t0 += g.n_tasks();
        }
        Self {
            agent_features: Tensor::matrix(total_agents, width, agent_data).unwrap(),
            task_features: Tensor::matrix(total_tasks, TASK_FEATURES, task_data).unwrap(),
            place_agents: Rc::new(Sparse::new(total_nodes, total_agents, pa)),
            place_tasks: Rc::new(Sparse::new(total_nodes, total_tasks, pt)),
            adjacency: Rc::new(Sparse::new(total_nodes, total_nodes, adj)),
            agent_rows,
            agent_offsets,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agent_rows.len()
    }
}

/// Encodes a batch on `tape`; returns agent embeddings, one row per agent.
pub fn gcn_encode_on(tape: &mut Tape, batch: &GraphBatch, p: &GcnVars) -> Result<Var, TensorError> {
    let xa = tape.leaf(batch.agent_features.clone())?;
    let ha = tape.matmul(xa, p.agent_w)?;
    let ha = tape.add_row(ha, p.agent_b)?;
    let ha = tape.spmm(batch.place_agents.clone(), ha)?;
    let h0 = if batch.task_features.rows() > 0 {
        let xt = tape.leaf(batch.task_features.clone())?;
        let ht = tape.matmul(xt, p.task_w)?;
        let ht = tape.add_row(ht, p.task_b)?;
        let ht = tape.spmm(batch.place_tasks.clone(), ht)?;
        tape.add(ha, ht)?
    } else {
        ha
    };
    let mut h = h0;
    for (w, b) in [(p.w1, p.b1), (p.w2, p.b2)] {
        let m = tape.spmm(batch.adjacency.clone(), h)?;
        let m = tape.matmul(m, w)?;
        let m = tape.add_row(m, b)?;
        h = tape.relu(m)?;
    }
    tape.gather_rows(h, batch.agent_rows.clone())
}

/// Agent embeddings (N × 6) for one graph, computed without a tape.
pub fn gcn_encode(g: &HeteroGraph, p: &GcnParams, weighted: bool) -> Result<Tensor, TensorError> {
    let n = g.n_agents();
    let nodes = g.n_nodes();
    let proj = |x: &Tensor, w: &Tensor, b: &Tensor| -> Result<Tensor, TensorError> {
        let mut y = matmul(x, w)?;
        let c = y.cols();
        for (k, v) in y.data_mut().iter_mut().enumerate() {
            *v += b.data()[k % c];
        }
        Ok(y)
    };
    let ha = proj(&g.agent_features, &p.agent_w, &p.agent_b)?;
    let ht = proj(&g.task_features, &p.task_w, &p.task_b)?;
    let mut data = ha.into_data();
    data.extend(ht.into_data());
    let mut h = Tensor::matrix(nodes, HIDDEN, data)?;
    let adj = Sparse::new(nodes, nodes, g.aggregation(weighted)).to_dense();
    for (w, b) in [(&p.w1, &p.b1), (&p.w2, &p.b2)] {
        let m = matmul(&adj, &h)?;
        let mut y = proj(&m, w, b)?;
        for v in y.data_mut() {
            *v = v.max(0.0);
        }
        h = y;
    }
    Tensor::matrix(n, HIDDEN, h.data()[..n * HIDDEN].to_vec())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::pathplan::Cell;
    use crate::world::{init_episode, WorldConfig};

    fn world(n: usize, m: usize) -> EpisodeState {
        let mut cfg = WorldConfig::static_scenario(n.max(m));
        cfg.n_agents = n;
        cfg.agent_mix.ground = n / 2;
        cfg.agent_mix.aerial = n - n / 2;
        cfg.n_tasks_initial = m;
        cfg.grid_dims = [12, 12, 4];
        cfg.obstacle_density = 0.0;
        init_episode(&cfg, 5).unwrap()
    }

    #[test]
    fn two_agents_three_tasks() {
        let mut s = world(2, 3);
        let c = s.ensure_costs().clone();
        let g = build_graph(&s, &c, &GnnConfig::default());
        assert_eq!(g.n_nodes(), 5);
        assert_eq!(g.edges.len(), 6);
        assert!(g.edges.iter().all(|&(_, _, w)| w > 0.0 && w <= 1.0));
        assert_eq!(g.agent_features.cols(), 5 + 3);
    }

    #[test]
    fn assigned_flag_and_done_exclusion() {
        let mut s = world(2, 3);
        s.tasks[1].status = TaskStatus::Assigned;
        s.tasks[2].status = TaskStatus::Done;
        s.slots[2] = None;
        let c = s.ensure_costs().clone();
        let g = build_graph(&s, &c, &GnnConfig::default());
        assert_eq!(g.task_slots, vec![0, 1]);
        assert_eq!(g.task_features.get(0, 3), 0.0);
        assert_eq!(g.task_features.get(1, 3), 1.0);
    }

    #[test]
    fn zero_cost_gives_unit_weight() {
        let mut s = world(1, 1);
        let c = CostMatrix::from_rows(&[vec![0.0]]).unwrap();
        s.costs = Some(c.clone());
        let g = build_graph(&s, &c, &GnnConfig::default());
        assert_eq!(g.edges, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn comm_radius_adds_agent_edges() {
        let mut s = world(3, 2);
        s.agents[0].position = Cell::new(0, 0, 0);
        s.agents[1].position = Cell::new(2, 0, 0);
        s.agents[2].position = Cell::new(9, 9, 3);
        let c = s.ensure_costs().clone();
        let cfg = GnnConfig { comm_radius: Some(3.0), ..Default::default() };
        let g = build_graph(&s, &c, &cfg);
        assert_eq!(g.agent_edges, vec![(0, 1)]);
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let mut s = world(3, 3);
        let c = s.ensure_costs().clone();
        let g = build_graph(&s, &c, &GnnConfig::default());
        let e = gcn_encode(&g, &GcnParams::zeros(3), true).unwrap();
        assert_eq!(e, Tensor::zeros(3, HIDDEN));
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut s = world(3, 4);
        let c = s.ensure_costs().clone();
        let g = build_graph(&s, &c, &GnnConfig::default());
        let p = GcnParams::init(4, &mut ChaCha8Rng::seed_from_u64(1));
        let plain = gcn_encode(&g, &p, true).unwrap();
        let mut tape = Tape::new();
        let vars = GcnVars::record(&mut tape, &p).unwrap();
        let batch = GraphBatch::new(&[&g, &g], true);
        let out = gcn_encode_on(&mut tape, &batch, &vars).unwrap();
        let v = tape.value(out);
        assert_eq!(v.rows(), 6);
        for i in 0..3 {
            for j in 0..HIDDEN {
                assert!((v.get(i, j) - plain.get(i, j)).abs() < 1e-12);
                assert!((v.get(i + 3, j) - plain.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn isolated_agent_uses_self_loop_only() {
        let mut s = world(2, 1);
        s.tasks[0].status = TaskStatus::Done;
        s.slots[0] = None;
        let c = s.ensure_costs().clone();
        let g = build_graph(&s, &c, &GnnConfig::default());
        assert_eq!(g.n_tasks(), 0);
        let p = GcnParams::init(s.m_max(), &mut ChaCha8Rng::seed_from_u64(2));
        let e = gcn_encode(&g, &p, true).unwrap();
        assert_eq!(e.rows(), 2);
        assert!(e.is_finite());
    }

    #[test]
    fn hand_computed_single_pair() {
        // one agent, one task, cost 1 so w = 1/2; self weight 1 -> mix 2/3, 1/3
        let g = HeteroGraph {
            agent_features: Tensor::row(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            task_features: Tensor::row(vec![0.0, 1.0, 0.0, 0.0]),
            task_slots: vec![0],
            edges: vec![(0, 0, 0.5)],
            agent_edges: vec![],
            m_max: 1,
        };
        let mut p = GcnParams::zeros(1);
        p.agent_w.data_mut()[0] = 3.0; // agent feature 0 -> hidden 0
        p.task_w.data_mut()[HIDDEN] = 6.0; // task feature 1 -> hidden 0
        p.w1 = Tensor::identity(HIDDEN);
        p.w2 = Tensor::identity(HIDDEN);
        // layer 1: agent 2/3*3 + 1/3*6 = 4; task 2/3*6 + 1/3*3 = 5
        // layer 2: agent 2/3*4 + 1/3*5 = 13/3
        let e = gcn_encode(&g, &p, true).unwrap();
        assert!((e.get(0, 0) - 13.0 / 3.0).abs() < 1e-12);
        assert!(e.data()[1..].iter().all(|&v| v == 0.0));
    }
}
