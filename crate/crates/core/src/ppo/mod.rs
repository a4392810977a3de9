//! Centralized-critic PPO: rollouts, advantages, clipped updates, training loop.

mod gae;
mod rollout;
mod update;

pub use gae::{compute_gae, normalize};
pub use rollout::{collect_episode, collect_rollout, RolloutBuffer, StepRecord, Transition, DECISION_DT};
pub use update::{minibatch_loss, ppo_update, LossStats, MinibatchLoss};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::GnnConfig;
use crate::policy::PolicyParams;
use crate::tensor::{AdamConfig, AdamState, TensorError};
use crate::world::{WorldConfig, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub train_batch: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub value_coef: f64,
    /// Agent transitions to collect over the whole run.
    pub total_steps: usize,
    pub normalize_advantages: bool,
    /// Write a numbered checkpoint every this many updates; 0 disables.
    pub checkpoint_every: usize,
    /// Episodes simulated per collection round.
    pub episodes_per_round: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            train_batch: 512,
            minibatch: 64,
            epochs: 10,
            entropy_coef: 0.05,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            value_coef: 0.5,
            total_steps: 100_000,
            normalize_advantages: true,
            checkpoint_every: 0,
            episodes_per_round: 8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if self.minibatch == 0 || self.train_batch == 0 || self.train_batch % self.minibatch != 0 {
            return fail("minibatch must divide train_batch");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_epsilon > 0.0) {
            return fail("learning_rate and clip_epsilon must be positive");
        }
        if self.episodes_per_round == 0 {
            return fail("episodes_per_round must be positive");
        }
        Ok(())
    }
}

/// Contents of a `train` config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub world: WorldConfig,
    pub ppo: PpoConfig,
    pub gnn: GnnConfig,
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let c: TrainConfig = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        c.world.validate()?;
        c.ppo.validate()?;
        Ok(c)
    }
}

/// One row of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update_index: usize,
    pub env_steps: usize,
    pub mean_episode_reward: f64,
    pub mean_entropy: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
}

pub const METRICS_HEADER: &str = "update_index,env_steps,mean_episode_reward,mean_entropy,policy_loss,value_loss,clip_fraction";

impl UpdateMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.update_index, self.env_steps, self.mean_episode_reward, self.mean_entropy, self.policy_loss, self.value_loss, self.clip_fraction
        )
    }

    pub fn parse_csv(text: &str) -> Result<Vec<Self>, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(METRICS_HEADER) {
            return Err("unexpected metrics header".into());
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, l)| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 7 {
                    return Err(format!("line {}: expected 7 fields", k + 2));
                }
                let num = |i: usize| f[i].trim().parse::<f64>().map_err(|e| format!("line {}: {e}", k + 2));
                Ok(Self {
                    update_index: num(0)? as usize,
                    env_steps: num(1)? as usize,
                    mean_episode_reward: num(2)?,
                    mean_entropy: num(3)?,
                    policy_loss: num(4)?,
                    value_loss: num(5)?,
                    clip_fraction: num(6)?,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Directory for `metrics.csv` and checkpoints; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
    /// Worker threads for rollouts; results do not depend on it.
    pub parallel: usize,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: PolicyParams,
    pub metrics: Vec<UpdateMetrics>,
}

fn episode_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Alternates rollout collection and PPO updates until `total_steps` agent
/// transitions have been gathered.
pub fn train(cfg: &TrainConfig, seed: u64, opts: &TrainOptions) -> Result<TrainResult, TrainError> {
    cfg.world.validate()?;
    cfg.ppo.validate()?;
    let threads = opts.parallel.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    pool.install(|| train_inner(cfg, seed, opts))
}

fn train_inner(cfg: &TrainConfig, seed: u64, opts: &TrainOptions) -> Result<TrainResult, TrainError> {
    let ppo = &cfg.ppo;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PolicyParams::init(cfg.world.n_agents, cfg.world.m_max(), cfg.gnn, &mut rng);
    let adam_cfg = AdamConfig {
        lr: ppo.learning_rate,
        ..Default::default()
    };
    let mut adam = AdamState::new(adam_cfg, &params.tensors());
    let mut metrics = Vec::new();
    let mut log = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = std::fs::File::create(dir.join("metrics.csv"))?;
            writeln!(f, "{METRICS_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    let mut env_steps = 0;
    let mut next_episode = 0u64;
    let mut update_index = 0;
    let mut last_good = params.clone();
    while env_steps < ppo.total_steps {
        let (buf, next) = collect_rollout(
            &params,
            &cfg.world,
            ppo.train_batch,
            next_episode,
            |k| episode_seed(seed, k),
            ppo.gamma,
            ppo.gae_lambda,
            ppo.episodes_per_round,
        )?;
        next_episode = next;
        env_steps += buf.len();
        let stats = match ppo_update(&buf, &mut params, &mut adam, ppo, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                if let Some(dir) = &opts.out_dir {
                    last_good.save(&dir.join("last_good.json"), true)?;
                }
                return Err(e);
            }
        };
        let row = UpdateMetrics {
            update_index,
            env_steps,
            mean_episode_reward: buf.episode_rewards.iter().sum::<f64>() / buf.episode_rewards.len().max(1) as f64,
            mean_entropy: buf.mean_entropy(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_fraction: stats.clip_fraction,
        };
        if let Some(f) = log.as_mut() {
            writeln!(f, "{}", row.csv_row())?;
        }
        metrics.push(row);
        last_good = params.clone();
        update_index += 1;
        if let Some(dir) = &opts.out_dir {
            if ppo.checkpoint_every > 0 && update_index % ppo.checkpoint_every == 0 {
                params.save(&dir.join(format!("checkpoint_{update_index:05}.json")), true)?;
            }
        }
    }
    if let Some(dir) = &opts.out_dir {
        params.save(&dir.join("policy.json"), true)?;
    }
    Ok(TrainResult { params, metrics })
}

/// Writes metrics rows as CSV with the standard header.
pub fn write_metrics(path: &Path, rows: &[UpdateMetrics]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        let mut c = TrainConfig::default();
        c.world = WorldConfig::static_scenario(2);
        c.world.grid_dims = [12, 12, 4];
        c.ppo.train_batch = 32;
        c.ppo.minibatch = 16;
        c.ppo.epochs = 2;
        c.ppo.total_steps = 64;
        c.ppo.episodes_per_round = 4;
        c
    }

    #[test]
    fn config_validation() {
        let mut p = PpoConfig::default();
        p.validate().unwrap();
        p.minibatch = 100;
        assert!(p.validate().is_err());
        let mut p = PpoConfig::default();
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        assert!(TrainConfig::from_json(r#"{"ppo": {"epochs": 3}}"#).is_ok());
        assert!(TrainConfig::from_json(r#"{"ppo": {"epoch": 3}}"#).is_err());
    }

    #[test]
    fn same_seed_same_log_and_thread_independent() {
        let c = tiny();
        let a = train(&c, 3, &TrainOptions::default()).unwrap();
        let b = train(&c, 3, &TrainOptions { parallel: 2, ..Default::default() }).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.params, b.params);
        assert!(a.metrics.len() >= 2);
    }

    #[test]
    fn writes_log_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.ppo.checkpoint_every = 1;
        let r = train(&c, 1, &TrainOptions { out_dir: Some(dir.path().to_path_buf()), parallel: 1 }).unwrap();
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let rows = UpdateMetrics::parse_csv(&text).unwrap();
        assert_eq!(rows, r.metrics);
        let loaded = PolicyParams::load(&dir.path().join("policy.json")).unwrap();
        assert_eq!(loaded, r.params);
        assert!(dir.path().join("checkpoint_00001.json").exists());
    }
}
