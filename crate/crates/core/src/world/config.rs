use serde::{Deserialize, Serialize};

use super::WorldError;
use crate::pathplan::{Planner, RrtParams};

/// Reward magnitudes for one decision step and the episode-end bonus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardShaping {
    pub win_reward: f64,
    pub conflict_penalty: f64,
    pub idle_reject_penalty: f64,
    pub team_bonus_scale: f64,
}

impl Default for RewardShaping {
    fn default() -> Self {
        Self {
            win_reward: 1.0,
            conflict_penalty: -0.5,
            idle_reject_penalty: -0.1,
            team_bonus_scale: 2.0,
        }
    }
}

impl RewardShaping {
    pub fn validate(&self) -> Result<(), WorldError> {
        let ok = self.win_reward > 0.0
            && self.conflict_penalty <= 0.0
            && self.idle_reject_penalty <= 0.0
            && self.team_bonus_scale >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(WorldError::Config("reward shaping signs: win > 0, penalties <= 0, bonus >= 0".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentMix {
    pub ground: usize,
    pub aerial: usize,
}

/// Scenario description. JSON keys match these field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Extent in 1 m cells along x, y, z.
    pub grid_dims: [usize; 3],
    pub n_agents: usize,
    pub n_tasks_initial: usize,
    /// Also the number of task slots seen by the policy.
    pub max_active_tasks: usize,
    /// Seconds between spawns; `None` is the static scenario.
    pub task_interval: Option<f64>,
    pub obstacle_density: f64,
    pub agent_mix: AgentMix,
    pub shaping: RewardShaping,
    pub seed: u64,
    pub ground_velocity: f64,
    pub aerial_velocity: f64,
    /// Seconds mapped to 1.0 in observations and node features.
    pub cost_scale: f64,
    pub max_ticks: u64,
    pub planner: Planner,
    pub rrt: RrtParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            grid_dims: [50, 50, 30],
            n_agents: 4,
            n_tasks_initial: 4,
            max_active_tasks: 20,
            task_interval: None,
            obstacle_density: 0.05,
            agent_mix: AgentMix { ground: 2, aerial: 2 },
            shaping: RewardShaping::default(),
            seed: 0,
            ground_velocity: 3.0,
            aerial_velocity: 5.0,
            cost_scale: 40.0,
            max_ticks: 300,
            planner: Planner::Astar,
            rrt: RrtParams::default(),
        }
    }
}

impl WorldConfig {
    /// Static scenario with `n` agents (half ground, half aerial) and `n` tasks.
    pub fn static_scenario(n: usize) -> Self {
        let ground = n / 2;
        Self {
            n_agents: n,
            n_tasks_initial: n,
            max_active_tasks: n,
            agent_mix: AgentMix {
                ground,
                aerial: n - ground,
            },
            ..Self::default()
        }
    }

    pub fn is_dynamic(&self) -> bool {
        self.task_interval.is_some()
    }

    pub fn m_max(&self) -> usize {
        self.max_active_tasks
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let fail = |m: &str| Err(WorldError::Config(m.to_string()));
        if self.grid_dims.iter().any(|&d| d == 0) {
            return fail("grid dimensions must be positive");
        }
        if self.agent_mix.ground + self.agent_mix.aerial != self.n_agents {
            return fail("agent_mix must sum to n_agents");
        }
        if self.n_agents == 0 {
            return fail("at least one agent is required");
        }
        if self.max_active_tasks < self.n_tasks_initial {
            return fail("max_active_tasks must be >= n_tasks_initial");
        }
        if self.max_active_tasks == 0 {
            return fail("max_active_tasks must be positive");
        }
        if !(0.0..0.3).contains(&self.obstacle_density) {
            return fail("obstacle_density must lie in [0, 0.3)");
        }
        if !(self.ground_velocity > 0.0 && self.aerial_velocity > 0.0) {
            return fail("velocities must be positive");
        }
        if !(self.cost_scale > 0.0) {
            return fail("cost_scale must be positive");
        }
        if let Some(iv) = self.task_interval {
            if !(iv > 0.0) {
                return fail("task_interval must be positive");
            }
        }
        self.shaping.validate()
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let cfg: WorldConfig = serde_json::from_str(text).map_err(|e| WorldError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        WorldConfig::default().validate().unwrap();
        WorldConfig::static_scenario(4).validate().unwrap();
    }

    #[test]
    fn json_keys_mirror_fields() {
        let cfg = WorldConfig::from_json(r#"{"n_agents": 3, "n_tasks_initial": 2, "agent_mix": {"ground": 1, "aerial": 2}, "task_interval": 5.0}"#).unwrap();
        assert_eq!(cfg.n_agents, 3);
        assert_eq!(cfg.task_interval, Some(5.0));
        assert_eq!(cfg.grid_dims, [50, 50, 30]);
        assert!(WorldConfig::from_json(r#"{"n_agent": 3}"#).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = WorldConfig::static_scenario(4);
        c.obstacle_density = 0.3;
        assert!(c.validate().is_err());
        let mut c = WorldConfig::static_scenario(4);
        c.max_active_tasks = 3;
        assert!(c.validate().is_err());
        let mut c = WorldConfig::static_scenario(4);
        c.shaping.conflict_penalty = 0.5;
        assert!(c.validate().is_err());
    }
}
