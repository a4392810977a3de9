//! Shared actor over {reject, slot 1..M} and the centralized critic.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::{build_graph, gcn_encode, GcnParams, GnnConfig, HeteroGraph, HIDDEN, TASK_FEATURES};
use crate::tensor::{glorot_uniform, matmul, softmax_rows, Checkpoint, Tape, Tensor, TensorError, Var};
use crate::world::{local_observation, AgentStatus, EpisodeState, TaskStatus};

pub const ACTOR_HIDDEN: usize = 128;
pub const CRITIC_HIDDEN: usize = 128;
/// Scale applied to the initial actor output layer so the starting policy is
/// close to uniform.
pub const ACTOR_OUTPUT_GAIN: f64 = 0.01;

pub fn actor_input_width(m_max: usize) -> usize {
    m_max + 1 + HIDDEN
}

pub fn critic_input_width(n_max: usize, m_max: usize) -> usize {
    HIDDEN * n_max + TASK_FEATURES * m_max
}

/// Two dense layers with weights stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    fn init<R: Rng>(input: usize, hidden: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let w1 = glorot_uniform(input, hidden, rng);
        let mut w2 = glorot_uniform(hidden, output, rng);
        for v in w2.data_mut() {
            *v *= gain;
        }
        Self {
            w1,
            b1: Tensor::zeros(1, hidden),
            w2,
            b2: Tensor::zeros(1, output),
        }
    }

    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Tensor::zeros(input, hidden),
            b1: Tensor::zeros(1, hidden),
            w2: Tensor::zeros(hidden, output),
            b2: Tensor::zeros(1, output),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_width(&self) -> usize {
        self.w2.cols()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        vec![self.w1.clone(), self.b1.clone(), self.w2.clone(), self.b2.clone()]
    }

    fn from_tensors(t: &[Tensor]) -> Result<Self, TensorError> {
        let [w1, b1, w2, b2] = t else {
            return Err(TensorError::Checkpoint(format!("dense pair needs 4 tensors, got {}", t.len())));
        };
        let shapes_ok = b1.rows() == 1
            && b1.cols() == w1.cols()
            && w2.rows() == w1.cols()
            && b2.rows() == 1
            && b2.cols() == w2.cols();
        if !shapes_ok {
            return Err(TensorError::Shape {
                op: "dense params",
                left: w1.shape().to_vec(),
                right: w2.shape().to_vec(),
            });
        }
        Ok(Self {
            w1: w1.clone(),
            b1: b1.clone(),
            w2: w2.clone(),
            b2: b2.clone(),
        })
    }

    /// Plain forward pass over the rows of `x`; the output is pre-activation.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut h = matmul(x, &self.w1)?;
        let c = h.cols();
        for (k, v) in h.data_mut().iter_mut().enumerate() {
            *v = (*v + self.b1.data()[k % c]).max(0.0);
        }
        let mut o = matmul(&h, &self.w2)?;
        let c = o.cols();
        for (k, v) in o.data_mut().iter_mut().enumerate() {
            *v += self.b2.data()[k % c];
        }
        Ok(o)
    }

    fn write(&self, prefix: &str, c: &mut Checkpoint) {
        for (name, t) in ["w1", "b1", "w2", "b2"].iter().zip(self.tensors()) {
            c.insert(&format!("{prefix}.{name}"), &t);
        }
    }

    fn read(prefix: &str, c: &Checkpoint) -> Result<Self, TensorError> {
        let t: Result<Vec<Tensor>, _> = ["w1", "b1", "w2", "b2"].iter().map(|n| c.get(&format!("{prefix}.{n}"))).collect();
        Self::from_tensors(&t?)
    }
}

/// Dense pair recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn record(tape: &mut Tape, p: &Mlp) -> Result<Self, TensorError> {
        Ok(Self {
            w1: tape.leaf(p.w1.clone())?,
            b1: tape.leaf(p.b1.clone())?,
            w2: tape.leaf(p.w2.clone())?,
            b2: tape.leaf(p.b2.clone())?,
        })
    }

    pub fn list(&self) -> Vec<Var> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }

    /// Linear, ReLU, linear.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, TensorError> {
        let h = tape.matmul(x, self.w1)?;
        let h = tape.add_row(h, self.b1)?;
        let h = tape.relu(h)?;
        let o = tape.matmul(h, self.w2)?;
        tape.add_row(o, self.b2)
    }
}

/// `(m_max + 7) → 128 → (m_max + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorParams(pub Mlp);

impl ActorParams {
    pub fn init<R: Rng>(m_max: usize, rng: &mut R) -> Self {
        Self(Mlp::init(actor_input_width(m_max), ACTOR_HIDDEN, m_max + 1, ACTOR_OUTPUT_GAIN, rng))
    }

    pub fn zeros(m_max: usize) -> Self {
        Self(Mlp::zeros(actor_input_width(m_max), ACTOR_HIDDEN, m_max + 1))
    }

    pub fn m_max(&self) -> usize {
        self.0.output_width() - 1
    }
}

/// `(6 · n_max + 4 · m_max) → 128 → 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticParams(pub Mlp);

impl CriticParams {
    pub fn init<R: Rng>(n_max: usize, m_max: usize, rng: &mut R) -> Self {
        Self(Mlp::init(critic_input_width(n_max, m_max), CRITIC_HIDDEN, 1, 1.0, rng))
    }

    pub fn zeros(n_max: usize, m_max: usize) -> Self {
        Self(Mlp::zeros(critic_input_width(n_max, m_max), CRITIC_HIDDEN, 1))
    }
}

/// Probabilities over {reject, slot 1..M}; masked entries are exactly 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ActionDistribution {
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.probs[action].ln()
    }
}

/// Reject is always allowed; slots that are empty or hold a Done task are not.
pub fn action_mask(state: &EpisodeState, m_max: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(m_max + 1);
    mask.push(true);
    for slot in 0..m_max {
        mask.push(state.slot_task(slot).is_some_and(|t| t.status != TaskStatus::Done));
    }
    mask
}

/// Observation followed by the agent embedding.
pub fn actor_input(obs: &[f64], emb: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + emb.len());
    x.extend_from_slice(obs);
    x.extend_from_slice(emb);
    x
}

pub fn actor_forward(obs: &[f64], emb: &[f64], p: &ActorParams, mask: &[bool]) -> Result<ActionDistribution, TensorError> {
    let x = Tensor::row(actor_input(obs, emb));
    if x.cols() != p.0.input_width() || mask.len() != p.0.output_width() {
        return Err(TensorError::Shape {
            op: "actor_forward",
            left: vec![x.cols(), mask.len()],
            right: vec![p.0.input_width(), p.0.output_width()],
        });
    }
    let logits = p.0.forward(&x)?;
    Ok(masked_softmax(logits.data(), mask))
}

fn masked_softmax(logits: &[f64], mask: &[bool]) -> ActionDistribution {
    let allowed: Vec<f64> = logits.iter().zip(mask).map(|(&l, &m)| if m { l } else { f64::NEG_INFINITY }).collect();
    let p = softmax_rows(&Tensor::row(allowed));
    ActionDistribution {
        probs: p.into_data(),
        mask: mask.to_vec(),
    }
}

/// Log-probabilities for a batch of actor inputs (B × (m_max + 7)).
pub fn actor_log_probs_on(tape: &mut Tape, x: Var, p: &MlpVars, mask: Vec<bool>) -> Result<Var, TensorError> {
    let logits = p.forward(tape, x)?;
    tape.masked_log_softmax(logits, mask)
}

/// Agent embeddings zero-padded to `n_max` rows, then padded task features.
pub fn critic_input(agent_emb: &Tensor, padded_tasks: &[f64], n_max: usize) -> Vec<f64> {
    let mut x = vec![0.0; HIDDEN * n_max];
    let n = agent_emb.rows().min(n_max);
    x[..n * HIDDEN].copy_from_slice(&agent_emb.data()[..n * HIDDEN]);
    x.extend_from_slice(padded_tasks);
    x
}

pub fn critic_forward(agent_emb: &Tensor, padded_tasks: &[f64], n_max: usize, p: &CriticParams) -> Result<f64, TensorError> {
    let x = Tensor::row(critic_input(agent_emb, padded_tasks, n_max));
    if x.cols() != p.0.input_width() {
        return Err(TensorError::Shape {
            op: "critic_forward",
            left: x.shape().to_vec(),
            right: vec![p.0.input_width()],
        });
    }
    Ok(p.0.forward(&x)?.item())
}

/// Categorical draw; returns the action and its natural-log probability.
pub fn sample_action<R: Rng>(dist: &ActionDistribution, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in dist.probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = a;
        acc += p;
        if u < acc {
            return (a, p.ln());
        }
    }
    (last, dist.probs[last].ln())
}

/// Most probable action; ties go to the lower index.
pub fn greedy_action(dist: &ActionDistribution) -> (usize, f64) {
    let mut best = 0;
    for (a, &p) in dist.probs.iter().enumerate() {
        if p > dist.probs[best] {
            best = a;
        }
    }
    (best, dist.probs[best].ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Critic values are computed alongside actions.
    Train,
    /// Decentralized execution: no critic is consulted.
    Eval,
}

/// Everything a trained allocator needs; the critic is optional so that
/// evaluation can run from actor-only checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub n_max: usize,
    pub m_max: usize,
    pub gnn: GnnConfig,
    pub gcn: GcnParams,
    pub actor: ActorParams,
    pub critic: Option<CriticParams>,
}

/// One agent's decision at a decision step.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentDecision {
    pub agent: usize,
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Actions for all agents plus the per-agent records for Idle agents.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDecision {
    pub actions: Vec<usize>,
    pub decisions: Vec<AgentDecision>,
    pub graph: HeteroGraph,
    pub value: Option<f64>,
}

impl PolicyParams {
    pub fn init<R: Rng>(n_max: usize, m_max: usize, gnn: GnnConfig, rng: &mut R) -> Self {
        Self {
            n_max,
            m_max,
            gnn,
            gcn: GcnParams::init(m_max, rng),
            actor: ActorParams::init(m_max, rng),
            critic: Some(CriticParams::init(n_max, m_max, rng)),
        }
    }

    /// Flat list in checkpoint order: encoder, actor, critic.
    pub fn tensors(&self) -> Vec<Tensor> {
        let mut t = self.gcn.tensors();
        t.extend(self.actor.0.tensors());
        if let Some(c) = &self.critic {
            t.extend(c.0.tensors());
        }
        t
    }

    pub fn set_tensors(&mut self, t: &[Tensor]) -> Result<(), TensorError> {
        let need = 8 + 4 + if self.critic.is_some() { 4 } else { 0 };
        if t.len() != need {
            return Err(TensorError::Checkpoint(format!("expected {need} tensors, got {}", t.len())));
        }
        self.gcn = GcnParams::from_tensors(&t[..8])?;
        self.actor = ActorParams(Mlp::from_tensors(&t[8..12])?);
        if self.critic.is_some() {
            self.critic = Some(CriticParams(Mlp::from_tensors(&t[12..16])?));
        }
        Ok(())
    }

    /// Chooses an action for every agent. Non-Idle agents get 0. In
    /// `ExecutionMode::Train` the critic value of the current state is returned too.
    pub fn decide<R: Rng>(&self, state: &mut EpisodeState, mode: ExecutionMode, stochastic: bool, rng: &mut R) -> Result<StepDecision, TensorError> {
        let costs = state.ensure_costs().clone();
        let graph = build_graph(state, &costs, &self.gnn);
        let emb = gcn_encode(&graph, &self.gcn, self.gnn.weighted)?;
        let mask = action_mask(state, self.m_max);
        let mut actions = vec![0; state.agents.len()];
        let mut decisions = Vec::new();
        for a in &state.agents {
            if a.status != AgentStatus::Idle {
                continue;
            }
            let obs = local_observation(state, a.id, self.m_max).expect("agent exists");
            let dist = actor_forward(&obs, emb.row_slice(a.id), &self.actor, &mask)?;
            let (action, log_prob) = if stochastic { sample_action(&dist, rng) } else { greedy_action(&dist) };
            actions[a.id] = action;
            decisions.push(AgentDecision {
                agent: a.id,
                obs,
                mask: mask.clone(),
                action,
                log_prob,
                entropy: dist.entropy(),
            });
        }
        let value = match (mode, &self.critic) {
            (ExecutionMode::Train, Some(c)) => Some(critic_forward(&emb, &graph.padded_task_features(), self.n_max, c)?),
            _ => None,
        };
        Ok(StepDecision {
            actions,
            decisions,
            graph,
            value,
        })
    }

    pub fn to_checkpoint(&self, include_critic: bool) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.meta.insert("n_max".into(), self.n_max.into());
        c.meta.insert("m_max".into(), self.m_max.into());
        c.meta.insert("gnn".into(), serde_json::to_value(self.gnn).unwrap());
        self.gcn.write(&mut c);
        self.actor.0.write("actor", &mut c);
        if include_critic {
            if let Some(cr) = &self.critic {
                cr.0.write("critic", &mut c);
            }
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, TensorError> {
        let meta_usize = |k: &str| {
            c.meta
                .get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| TensorError::Checkpoint(format!("manifest lacks {k}")))
        };
        let n_max = meta_usize("n_max")?;
        let m_max = meta_usize("m_max")?;
        let gnn = match c.meta.get("gnn") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| TensorError::Checkpoint(e.to_string()))?,
            None => GnnConfig::default(),
        };
        let gcn = GcnParams::read(c)?;
        let actor = ActorParams(Mlp::read("actor", c)?);
        let critic = if c.contains("critic.w1") {
            Some(CriticParams(Mlp::read("critic", c)?))
        } else {
            None
        };
        if gcn.m_max() != m_max || actor.m_max() != m_max {
            return Err(TensorError::Checkpoint("parameter shapes disagree with m_max".into()));
        }
        if let Some(cr) = &critic {
            if cr.0.input_width() != critic_input_width(n_max, m_max) {
                return Err(TensorError::Checkpoint("critic width disagrees with n_max".into()));
            }
        }
        Ok(Self {
            n_max,
            m_max,
            gnn,
            gcn,
            actor,
            critic,
        })
    }

    pub fn save(&self, path: &Path, include_critic: bool) -> std::io::Result<()> {
        self.to_checkpoint(include_critic).save(path)
    }

    pub fn load(path: &Path) -> Result<Self, TensorError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Refuses scenarios whose agent or slot counts differ from training.
    pub fn check_scenario(&self, n_agents: usize, m_max: usize) -> Result<(), TensorError> {
        if n_agents > self.n_max || m_max != self.m_max {
            return Err(TensorError::Checkpoint(format!(
                "checkpoint trained for n_max={}, m_max={}; scenario has {} agents and {} slots",
                self.n_max, self.m_max, n_agents, m_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::world::{init_episode, WorldConfig};

    #[test]
    fn zero_actor_is_uniform() {
        let p = ActorParams::zeros(4);
        let d = actor_forward(&[0.0; 5], &[0.0; 6], &p, &[true; 5]).unwrap();
        for &q in &d.probs {
            assert!((q - 0.2).abs() < 1e-15);
        }
        assert!((d.entropy() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn masked_slots_get_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ActorParams::init(4, &mut rng);
        let mask = [true, true, false, false, false];
        let d = actor_forward(&[0.0, 0.3, 2.0, 2.0, 2.0], &[0.1; 6], &p, &mask).unwrap();
        assert_eq!(&d.probs[2..], &[0.0, 0.0, 0.0]);
        assert!((d.probs[0] + d.probs[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn input_width_is_m_plus_seven() {
        assert_eq!(actor_input(&[0.0; 5], &[0.0; 6]).len(), 4 + 7);
        assert_eq!(ActorParams::zeros(4).0.input_width(), 11);
    }

    #[test]
    fn zero_critic_is_zero() {
        let p = CriticParams::zeros(2, 3);
        let v = critic_forward(&Tensor::full(2, HIDDEN, 0.4), &[0.5; 12], 2, &p).unwrap();
        assert_eq!(v, 0.0);
        assert!(critic_forward(&Tensor::full(2, HIDDEN, 0.4), &[0.5; 8], 2, &p).is_err());
    }

    #[test]
    fn degenerate_distribution_samples_its_mode() {
        let d = ActionDistribution {
            probs: vec![0.0, 1.0, 0.0],
            mask: vec![true; 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_action(&d, &mut rng), (1, 0.0));
        }
    }

    #[test]
    fn sampled_log_prob_matches_distribution() {
        let d = ActionDistribution {
            probs: vec![0.1, 0.6, 0.3],
            mask: vec![true; 3],
        };
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (x, lp) = sample_action(&d, &mut a);
            assert_eq!(lp, d.probs[x].ln());
            assert_eq!(sample_action(&d, &mut b).0, x);
        }
        assert_eq!(greedy_action(&d).0, 1);
    }

    #[test]
    fn initial_entropy_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = PolicyParams::init(4, 4, GnnConfig::default(), &mut rng);
        let mut s = init_episode(&WorldConfig::static_scenario(4), 2).unwrap();
        let step = p.decide(&mut s, ExecutionMode::Train, true, &mut rng).unwrap();
        assert_eq!(step.decisions.len(), 4);
        for d in &step.decisions {
            assert!(d.entropy >= 0.95 * 5f64.ln());
        }
        assert!(step.value.is_some());
    }

    #[test]
    fn eval_runs_without_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = PolicyParams::init(4, 4, GnnConfig::default(), &mut rng);
        p.critic = None;
        let mut s = init_episode(&WorldConfig::static_scenario(4), 2).unwrap();
        let step = p.decide(&mut s, ExecutionMode::Eval, false, &mut rng).unwrap();
        assert!(step.value.is_none());
        assert_eq!(step.actions.len(), 4);
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolicyParams::init(4, 4, GnnConfig::default(), &mut rng);
        let back = PolicyParams::from_checkpoint(&Checkpoint::from_json(&p.to_checkpoint(true).to_json()).unwrap()).unwrap();
        assert_eq!(back, p);
        let actor_only = PolicyParams::from_checkpoint(&p.to_checkpoint(false)).unwrap();
        assert!(actor_only.critic.is_none());
        assert!(p.check_scenario(4, 4).is_ok());
        assert!(p.check_scenario(4, 8).is_err());
    }
}
