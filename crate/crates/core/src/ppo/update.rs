use std::collections::BTreeMap;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gae::normalize;
use super::rollout::RolloutBuffer;
use super::{PpoConfig, TrainError};
use crate::gnn::{gcn_encode_on, GcnVars, GraphBatch, HIDDEN, TASK_FEATURES};
use crate::policy::{actor_log_probs_on, MlpVars, PolicyParams};
use crate::tensor::{AdamState, Sparse, Tape, Tensor, Var};

/// Means over the minibatches of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Loss graph for one minibatch.
pub struct MinibatchLoss {
    pub loss: Var,
    /// Parameter leaves in `PolicyParams::tensors` order.
    pub params: Vec<Var>,
    pub stats: LossStats,
}

/// Builds the clipped-surrogate loss over transitions `idx` of `buf`.
/// `advantages` is indexed like `buf.transitions`.
pub fn minibatch_loss(tape: &mut Tape, p: &PolicyParams, buf: &RolloutBuffer, idx: &[usize], advantages: &[f64], cfg: &PpoConfig) -> Result<MinibatchLoss, TrainError> {
    if p.critic.is_none() {
        return Err(TrainError::Config("training needs critic parameters".into()));
    }
    let params = tape.leaves(&p.tensors())?;
    let gcn = GcnVars {
        agent_w: params[0],
        agent_b: params[1],
        task_w: params[2],
        task_b: params[3],
        w1: params[4],
        b1: params[5],
        w2: params[6],
        b2: params[7],
    };
    let actor = MlpVars {
        w1: params[8],
        b1: params[9],
        w2: params[10],
        b2: params[11],
    };
    let critic_vars = MlpVars {
        w1: params[12],
        b1: params[13],
        w2: params[14],
        b2: params[15],
    };
    let (m_max, n_max) = (p.m_max, p.n_max);
    let width = m_max + 1;
    let b = idx.len();

    let mut step_slot: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in idx {
        let next = step_slot.len();
        step_slot.entry(buf.transitions[k].step).or_insert(next);
    }
    let mut steps: Vec<usize> = vec![0; step_slot.len()];
    for (&s, &u) in &step_slot {
        steps[u] = s;
    }
    let graphs: Vec<_> = steps.iter().map(|&s| &buf.steps[s].graph).collect();
    let batch = GraphBatch::new(&graphs, p.gnn.weighted);
    let emb = gcn_encode_on(tape, &batch, &gcn)?;

    // actor
    let mut obs = Vec::with_capacity(b * width);
    let mut rows = Vec::with_capacity(b);
    let mut mask = Vec::with_capacity(b * width);
    let mut picks = Vec::with_capacity(b);
    let (mut old, mut adv, mut ret, mut value_rows) = (vec![], vec![], vec![], vec![]);
    for (r, &k) in idx.iter().enumerate() {
        let t = &buf.transitions[k];
        let u = step_slot[&t.step];
        obs.extend_from_slice(&t.obs);
        rows.push(batch.agent_offsets[u] + t.agent);
        mask.extend_from_slice(&t.mask);
        picks.push(r * width + t.action);
        old.push(t.log_prob);
        adv.push(advantages[k]);
        ret.push(t.ret);
        value_rows.push(u);
    }
    let obs = tape.leaf(Tensor::matrix(b, width, obs)?)?;
    let e = tape.gather_rows(emb, rows)?;
    let x = tape.concat(&[obs, e])?;
    let maskf = Tensor::matrix(b, width, mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())?;
    let logp_all = actor_log_probs_on(tape, x, &actor, mask)?;
    let logp = tape.gather_flat(logp_all, picks)?;
    let old = tape.leaf(Tensor::matrix(b, 1, old)?)?;
    let diff = tape.sub(logp, old)?;
    let ratio = tape.exp(diff)?;
    let adv_t = Tensor::matrix(b, 1, adv)?;
    let s1 = tape.mul_const(ratio, adv_t.clone())?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon)?;
    let s2 = tape.mul_const(clipped, adv_t)?;
    let surr = tape.min(s1, s2)?;
    let surr = tape.mean(surr)?;
    let policy_loss = tape.scale(surr, -1.0)?;

    let probs = tape.exp(logp_all)?;
    let probs = tape.mul_const(probs, maskf)?;
    let plogp = tape.mul(probs, logp_all)?;
    let neg_ent = tape.sum(plogp)?;
    let entropy = tape.scale(neg_ent, -1.0 / b as f64)?;

    // critic over the distinct decision steps
    let u_count = steps.len();
    let in_rows = batch.n_agents() * HIDDEN;
    let mut place = Vec::new();
    for (u, g) in graphs.iter().enumerate() {
        for i in 0..g.n_agents().min(n_max) {
            for h in 0..HIDDEN {
                place.push((u * HIDDEN * n_max + i * HIDDEN + h, (batch.agent_offsets[u] + i) * HIDDEN + h, 1.0));
            }
        }
    }
    let flat = tape.reshape(emb, in_rows, 1)?;
    let padded = tape.spmm(Rc::new(Sparse::new(u_count * HIDDEN * n_max, in_rows, place)), flat)?;
    let padded = tape.reshape(padded, u_count, HIDDEN * n_max)?;
    let mut task_data = Vec::with_capacity(u_count * TASK_FEATURES * m_max);
    for g in &graphs {
        task_data.extend(g.padded_task_features());
    }
    let tasks = tape.leaf(Tensor::matrix(u_count, TASK_FEATURES * m_max, task_data)?)?;
    let cin = tape.concat(&[padded, tasks])?;
    let values = critic_vars.forward(tape, cin)?;
    let v = tape.gather_flat(values, value_rows)?;
    let ret = tape.leaf(Tensor::matrix(b, 1, ret)?)?;
    let err = tape.sub(v, ret)?;
    let sq = tape.square(err)?;
    let value_loss = tape.mean(sq)?;

    let vl = tape.scale(value_loss, cfg.value_coef)?;
    let el = tape.scale(entropy, -cfg.entropy_coef)?;
    let loss = tape.add(policy_loss, vl)?;
    let loss = tape.add(loss, el)?;

    let ratios = tape.value(ratio).data();
    let clip_fraction = ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip_epsilon).count() as f64 / b as f64;
    let stats = LossStats {
        policy_loss: tape.value(policy_loss).item(),
        value_loss: tape.value(value_loss).item(),
        entropy: tape.value(entropy).item(),
        clip_fraction,
    };
    Ok(MinibatchLoss { loss, params, stats })
}

/// Picks `train_batch` transitions, normalizes their advantages, and runs
/// `epochs` passes of shuffled minibatches with one Adam step each.
pub fn ppo_update<R: Rng>(buf: &RolloutBuffer, params: &mut PolicyParams, adam: &mut AdamState, cfg: &PpoConfig, rng: &mut R) -> Result<LossStats, TrainError> {
    let mut chosen: Vec<usize> = (0..buf.len()).collect();
    chosen.shuffle(rng);
    chosen.truncate(cfg.train_batch.min(buf.len()));
    let mut advantages = vec![0.0; buf.len()];
    let mut picked: Vec<f64> = chosen.iter().map(|&k| buf.transitions[k].advantage).collect();
    if cfg.normalize_advantages {
        normalize(&mut picked);
    }
    for (&k, &a) in chosen.iter().zip(&picked) {
        advantages[k] = a;
    }
    let mut total = LossStats::default();
    let mut count = 0.0;
    let mut tensors = params.tensors();
    for _ in 0..cfg.epochs {
        chosen.shuffle(rng);
        for mb in chosen.chunks(cfg.minibatch) {
            let mut tape = Tape::new();
            let out = minibatch_loss(&mut tape, params, buf, mb, &advantages, cfg)?;
            if !out.stats.policy_loss.is_finite() || !out.stats.value_loss.is_finite() {
                return Err(TrainError::Diverged(format!("loss {:?}", out.stats)));
            }
            let grads = tape.backward(out.loss)?.collect(&out.params);
            adam.step(&mut tensors, &grads)?;
            params.set_tensors(&tensors)?;
            total.policy_loss += out.stats.policy_loss;
            total.value_loss += out.stats.value_loss;
            total.entropy += out.stats.entropy;
            total.clip_fraction += out.stats.clip_fraction;
            count += 1.0;
        }
    }
    if count > 0.0 {
        total.policy_loss /= count;
        total.value_loss /= count;
        total.entropy /= count;
        total.clip_fraction /= count;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::rollout::collect_episode;
    use super::*;
    use crate::gnn::GnnConfig;
    use crate::tensor::AdamConfig;
    use crate::world::WorldConfig;

    fn small() -> (PolicyParams, RolloutBuffer, PpoConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicyParams::init(4, 4, GnnConfig::default(), &mut rng);
        let mut w = WorldConfig::static_scenario(4);
        w.grid_dims = [16, 16, 6];
        let mut buf = RolloutBuffer::default();
        for s in 0..3 {
            buf.append(collect_episode(&p, &w, s, 0.99, 0.95).unwrap());
        }
        let cfg = PpoConfig {
            train_batch: 16,
            minibatch: 8,
            epochs: 2,
            ..Default::default()
        };
        (p, buf, cfg)
    }

    #[test]
    fn ratio_one_gives_minus_mean_advantage() {
        let (p, buf, cfg) = small();
        let idx: Vec<usize> = (0..buf.len().min(8)).collect();
        let adv: Vec<f64> = (0..buf.len()).map(|k| k as f64 * 0.1 - 0.3).collect();
        let mut tape = Tape::new();
        let out = minibatch_loss(&mut tape, &p, &buf, &idx, &adv, &cfg).unwrap();
        let mean: f64 = idx.iter().map(|&k| adv[k]).sum::<f64>() / idx.len() as f64;
        assert!((out.stats.policy_loss + mean).abs() < 1e-9);
        assert_eq!(out.stats.clip_fraction, 0.0);
        assert!(out.stats.entropy > 0.95 * 5f64.ln());
    }

    #[test]
    fn clipped_branch_selected() {
        // min(1.5 A, 1.2 A) for A > 0
        let mut tape = Tape::new();
        let r = tape.leaf(Tensor::row(vec![1.5])).unwrap();
        let a = Tensor::row(vec![2.0]);
        let s1 = tape.mul_const(r, a.clone()).unwrap();
        let c = tape.clamp(r, 0.8, 1.2).unwrap();
        let s2 = tape.mul_const(c, a).unwrap();
        let m = tape.min(s1, s2).unwrap();
        assert!((tape.value(m).item() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn nothing_to_learn_means_no_change() {
        let (mut p, mut buf, mut cfg) = small();
        for t in &mut buf.transitions {
            t.advantage = 0.0;
        }
        // make the critic fit exactly: zero output layer and returns of 0
        let critic = p.critic.as_mut().unwrap();
        critic.0.w2 = Tensor::zeros(critic.0.w2.rows(), 1);
        critic.0.b2 = Tensor::zeros(1, 1);
        for t in &mut buf.transitions {
            t.ret = 0.0;
        }
        cfg.entropy_coef = 0.0;
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &p.tensors());
        ppo_update(&buf, &mut p, &mut adam, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p, before);
        cfg.entropy_coef = 0.05;
        ppo_update(&buf, &mut p, &mut adam, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_ne!(p.actor, before.actor);
    }
}
