//! Evaluation harness: runs every allocation method on shared scenario
//! instances and tabulates cost, conflict-free success and allocation time.

mod curves;
mod episode;
pub mod reference;
mod planners;

pub use curves::{emit_curves, windowed_mean};
pub use episode::{baseline_actions, run_episode, EpisodeMetrics};
pub use planners::{planner_compare, PlannerInstance, PlannerReport, PlannerRow, PLANNER_HEADER};

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::AssignError;
use crate::pathplan::Planner;
use crate::policy::PolicyParams;
use crate::tensor::TensorError;
use crate::world::{WorldConfig, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error("invalid scenario: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hungarian,
    Magnnet,
    Greedy,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hungarian, Method::Magnnet, Method::Greedy, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hungarian => "hungarian",
            Method::Magnnet => "magnnet",
            Method::Greedy => "greedy",
            Method::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// N tasks present at t = 0, none spawned later.
    #[default]
    Static,
    /// Tasks keep appearing every `task_interval` seconds.
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mode: Mode,
    pub n_agents: Vec<usize>,
    pub methods: Vec<Method>,
    pub episodes: usize,
    pub planner: Planner,
    pub seed_base: u64,
    /// Trained policy, required when `methods` includes magnnet.
    pub checkpoint: Option<PathBuf>,
    /// Dynamic mode only.
    pub task_interval: f64,
    pub grid_dims: Option<[usize; 3]>,
    pub obstacle_density: Option<f64>,
    pub max_ticks: Option<u64>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Static,
            n_agents: vec![4, 8, 12, 20],
            methods: Method::ALL.to_vec(),
            episodes: 20,
            planner: Planner::Astar,
            seed_base: 0,
            checkpoint: None,
            task_interval: 5.0,
            grid_dims: None,
            obstacle_density: None,
            max_ticks: None,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let s: ScenarioSpec = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_agents.is_empty() || self.n_agents.contains(&0) {
            return Err(BenchError::Config("n_agents must list positive counts".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("no methods selected".into()));
        }
        if self.mode == Mode::Dynamic && !(self.task_interval > 0.0) {
            return Err(BenchError::Config("task_interval must be positive".into()));
        }
        for &n in &self.n_agents {
            self.world_for(n).validate()?;
        }
        Ok(())
    }

    /// World used for every episode with `n` agents.
    pub fn world_for(&self, n: usize) -> WorldConfig {
        let mut w = WorldConfig::static_scenario(n);
        w.planner = self.planner;
        if self.mode == Mode::Dynamic {
            w.task_interval = Some(self.task_interval);
        }
        if let Some(d) = self.grid_dims {
            w.grid_dims = d;
        }
        if let Some(p) = self.obstacle_density {
            w.obstacle_density = p;
        }
        if let Some(t) = self.max_ticks {
            w.max_ticks = t;
        }
        w
    }

    /// Shared by all methods so they face identical instances.
    pub fn episode_seed(&self, n: usize, episode: usize) -> u64 {
        splitmix(splitmix(self.seed_base ^ (n as u64) << 32) ^ episode as u64)
    }
}

/// Aggregate over the episodes of one (method, N) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub n_agents: usize,
    pub episodes: usize,
    pub mean_total_cost: f64,
    pub std_total_cost: f64,
    pub success_rate: f64,
    pub std_success_rate: f64,
    /// Percentage of tasks that were assigned at all.
    pub assigned_rate: f64,
    pub mean_path_length: f64,
    pub ref_total_cost: Option<f64>,
    pub ref_success_rate: Option<f64>,
    pub ref_alloc_time_s: Option<f64>,
    /// Wall time, hardware dependent.
    pub mean_alloc_time_s: f64,
}

pub const BENCH_HEADER: &str = "method,n_agents,episodes,mean_total_cost,std_total_cost,success_rate,std_success_rate,assigned_rate,mean_path_length,ref_total_cost,ref_success_rate,ref_alloc_time_s,mean_alloc_time_s";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: ScenarioSpec,
    pub rows: Vec<BenchRow>,
    pub episodes: Vec<EpisodeMetrics>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchReport {
    pub fn row(&self, method: Method, n: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.n_agents == n)
    }

    /// Full table; the last column is wall time.
    pub fn to_csv(&self) -> String {
        self.csv(true)
    }

    /// Table without the wall-time column, reproducible for a fixed seed base.
    pub fn to_csv_deterministic(&self) -> String {
        self.csv(false)
    }

    fn csv(&self, timing: bool) -> String {
        let header = if timing { BENCH_HEADER } else { BENCH_HEADER.trim_end_matches(",mean_alloc_time_s") };
        let mut out = format!("{header}\n");
        for r in &self.rows {
            out += &format!(
                "{},{},{},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6},{},{},{}",
                r.method.name(),
                r.n_agents,
                r.episodes,
                r.mean_total_cost,
                r.std_total_cost,
                r.success_rate,
                r.std_success_rate,
                r.assigned_rate,
                r.mean_path_length,
                opt(r.ref_total_cost),
                opt(r.ref_success_rate),
                opt(r.ref_alloc_time_s),
            );
            if timing {
                out += &format!(",{:.6e}", r.mean_alloc_time_s);
            }
            out.push('\n');
        }
        out
    }
}

/// Loads the checkpoint and refuses it unless it covers every scenario size.
fn load_policy(spec: &ScenarioSpec) -> Result<Option<PolicyParams>, BenchError> {
    if !spec.methods.contains(&Method::Magnnet) {
        return Ok(None);
    }
    let path = spec
        .checkpoint
        .as_ref()
        .ok_or_else(|| BenchError::Config("magnnet needs a checkpoint".into()))?;
    let p = PolicyParams::load(path)?;
    for &n in &spec.n_agents {
        p.check_scenario(n, spec.world_for(n).m_max())?;
    }
    Ok(Some(p))
}

/// Runs every (N, method, episode) cell of `spec`, using `policy` for
/// magnnet, on `parallel` worker threads. Results other than wall time do not
/// depend on the thread count.
pub fn run_benchmark_with(spec: &ScenarioSpec, policy: Option<&PolicyParams>, parallel: usize) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    if spec.methods.contains(&Method::Magnnet) {
        let p = policy.ok_or_else(|| BenchError::Config("magnnet needs a checkpoint".into()))?;
        for &n in &spec.n_agents {
            p.check_scenario(n, spec.world_for(n).m_max())?;
        }
    }
    let jobs: Vec<(usize, Method, usize)> = spec
        .n_agents
        .iter()
        .flat_map(|&n| spec.methods.iter().flat_map(move |&m| (0..spec.episodes).map(move |e| (n, m, e))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let results: Vec<Result<EpisodeMetrics, BenchError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, m, e)| {
                let (mut metrics, _) = run_episode(m, &spec.world_for(n), spec.episode_seed(n, e), policy)?;
                metrics.episode = e;
                Ok(metrics)
            })
            .collect()
    });
    let episodes = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for &n in &spec.n_agents {
        for &m in &spec.methods {
            let eps: Vec<&EpisodeMetrics> = episodes.iter().filter(|e| e.n_agents == n && e.method == m).collect();
            let (cost, cost_sd) = mean_std(&eps.iter().map(|e| e.total_cost).collect::<Vec<_>>());
            let (succ, succ_sd) = mean_std(&eps.iter().map(|e| e.success_rate()).collect::<Vec<_>>());
            let tasks: usize = eps.iter().map(|e| e.tasks).sum();
            let assigned: usize = eps.iter().map(|e| e.assigned).sum();
            let is_static = spec.mode == Mode::Static;
            rows.push(BenchRow {
                method: m,
                n_agents: n,
                episodes: eps.len(),
                mean_total_cost: cost,
                std_total_cost: cost_sd,
                success_rate: succ,
                std_success_rate: succ_sd,
                assigned_rate: if tasks == 0 { 100.0 } else { 100.0 * assigned as f64 / tasks as f64 },
                mean_path_length: mean_std(&eps.iter().map(|e| e.mean_path_length).collect::<Vec<_>>()).0,
                ref_total_cost: reference::total_cost(m, n).filter(|_| is_static),
                ref_success_rate: reference::success_rate(m, n).filter(|_| is_static),
                ref_alloc_time_s: reference::alloc_time(m, n).filter(|_| is_static),
                mean_alloc_time_s: mean_std(&eps.iter().map(|e| e.alloc_time_s).collect::<Vec<_>>()).0,
            });
        }
    }
    Ok(BenchReport {
        spec: spec.clone(),
        rows,
        episodes,
    })
}

/// Loads the spec's checkpoint if needed, then runs the sweep.
pub fn run_benchmark(spec: &ScenarioSpec, parallel: usize) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let policy = load_policy(spec)?;
    run_benchmark_with(spec, policy.as_ref(), parallel)
}
