//! REINFORCE over batches of branch trajectories.
//!
//! Each trajectory is scored with the cost-shaped discounted return
//! `R_T = r - lambda * C_T`, `R_t = gamma * R_{t+1} - lambda * C_t`, where
//! `C_t = F * ln(1 + t / phi)`. `C_0` is zero and `C_t` for `t >= 1` uses the
//! cost factor of the agent chosen at step `t - 1`, so the terminator's own
//! cost is charged at `t = T`. The trajectory's score is `R_0`.

mod metrics;

use std::collections::VecDeque;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentPool;
use crate::digest::mix_seed;
use crate::env::Environment;
use crate::orchestrator::{EpisodeResult, Orchestrator, OrchestratorConfig, OrchestratorError};
use crate::policy::{ActionPolicy, PolicyError, PolicyParams};
use crate::trajectory::Trajectory;

pub use metrics::{
    summarize, write_metrics_csv, CsvSink, EpisodeMetrics, EvalSummary, MetricsCsv, TrainingReport,
    TrajectoryLogLine, FINAL_WINDOW,
};

const TASK_STREAM: u64 = 0x7a5c;
const EPISODE_STREAM: u64 = 0xe915;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CostScale {
    /// `F` is the cost factor of the agent that acted.
    PerAgentCostFactor,
    /// One `F` for every step.
    GlobalF { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub lambda: f64,
    pub gamma: f64,
    /// Step budget normalizer; `None` means the orchestrator's `max_depth`.
    pub phi: Option<usize>,
    pub cost_scale: CostScale,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 0.99,
            phi: None,
            cost_scale: CostScale::PerAgentCostFactor,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: String| Err(TrainerError::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.phi == Some(0) {
            return bad("phi must be >= 1".into());
        }
        if let CostScale::GlobalF { value } = self.cost_scale {
            if !(value >= 0.0 && value.is_finite()) {
                return bad(format!("global F must be >= 0, got {value}"));
            }
        }
        Ok(())
    }

    /// Fills `phi` from `max_depth` when unset.
    pub fn resolved(&self, max_depth: usize) -> Self {
        Self {
            phi: Some(self.phi.unwrap_or(max_depth)),
            ..self.clone()
        }
    }

    fn phi_value(&self) -> f64 {
        self.phi.unwrap_or(crate::orchestrator::DEFAULT_MAX_DEPTH) as f64
    }

    fn scale(&self, agent_cost: f64) -> f64 {
        match self.cost_scale {
            CostScale::PerAgentCostFactor => agent_cost,
            CostScale::GlobalF { value } => value,
        }
    }
}

/// `C_t = F * ln(1 + t / phi)`.
pub fn step_cost(t: usize, config: &RewardConfig, agent_cost: f64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    config.scale(agent_cost) * (t as f64 / config.phi_value()).ln_1p()
}

/// Returns `R_0..=R_T` for terminal reward `r` and per-step cost factors.
pub fn compute_returns_from(r: f64, cost_factors: &[f64], config: &RewardConfig) -> Vec<f64> {
    let len = cost_factors.len();
    let cost = |t: usize| {
        if t == 0 {
            0.0
        } else {
            step_cost(t, config, cost_factors[t - 1])
        }
    };
    let mut returns = vec![0.0; len + 1];
    returns[len] = r - config.lambda * cost(len);
    for t in (0..len).rev() {
        returns[t] = config.gamma * returns[t + 1] - config.lambda * cost(t);
    }
    returns
}

pub fn compute_returns(traj: &Trajectory, config: &RewardConfig) -> Vec<f64> {
    compute_returns_from(traj.terminal_reward, &traj.cost_factors(), config)
}

/// `R(tau)`, identified with `R_0`.
pub fn trajectory_return(traj: &Trajectory, config: &RewardConfig) -> f64 {
    compute_returns(traj, config)[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    None,
    /// Mean trajectory return over the last `window` trajectories of earlier batches.
    MovingAverage { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    /// Trajectories per update (`N`). Every branch is one trajectory; a
    /// batch closes at the first episode boundary with at least `N` of them.
    pub batch_size: usize,
    pub episodes: usize,
    pub baseline: Baseline,
    pub seed: u64,
    /// Checkpoint every this many batches; 0 disables.
    pub checkpoint_every: usize,
    /// Weight each score term by `R_t` instead of `R_0`.
    pub returns_to_go: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 8,
            episodes: 500,
            baseline: Baseline::None,
            seed: 0,
            checkpoint_every: 50,
            returns_to_go: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainerError::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainerError::Config("batch_size must be >= 1".into()));
        }
        if let Baseline::MovingAverage { window: 0 } = self.baseline {
            return Err(TrainerError::Config("baseline window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("off-policy trajectory: sampled under {found:016x}, current params {expected:016x}")]
    OffPolicy { expected: u64, found: u64 },
    #[error("trajectory step {0} has no cached features")]
    MissingFeatures(usize),
    #[error("non-finite gradient in batch {batch}; dump:\n{dump}")]
    NonFiniteGradient { batch: usize, dump: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("training sink failed: {0}")]
    Sink(#[from] std::io::Error),
}

/// `(1/N) sum_n (sum_t grad log pi(a_t | S_t)) * (R(tau_n) - b)` over non-forced steps.
pub fn batch_gradient(
    batch: &[Trajectory],
    params: &PolicyParams,
    reward: &RewardConfig,
    trainer: &TrainerConfig,
    baseline: f64,
) -> Result<Array2<f64>, TrainerError> {
    if batch.is_empty() {
        return Err(TrainerError::EmptyBatch);
    }
    let expected = params.fingerprint();
    let mut grad = Array2::zeros(params.weights.raw_dim());
    for traj in batch {
        if traj.policy_fingerprint != expected {
            return Err(TrainerError::OffPolicy {
                expected,
                found: traj.policy_fingerprint,
            });
        }
        let returns = compute_returns(traj, reward);
        for step in traj.steps.iter().filter(|s| !s.forced) {
            let weight = if trainer.returns_to_go {
                returns[step.t]
            } else {
                returns[0]
            } - baseline;
            let x = step
                .features
                .as_ref()
                .ok_or(TrainerError::MissingFeatures(step.t))?;
            params.accumulate_log_prob_grad(x, &step.mask, step.agent_index, weight, &mut grad)?;
        }
    }
    grad /= batch.len() as f64;
    Ok(grad)
}

/// Receives per-episode metrics and periodic checkpoints during training.
pub trait TrainingSink {
    fn on_episode(&mut self, _metrics: &EpisodeMetrics, _episode: &EpisodeResult) -> std::io::Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _batch: usize, _params: &PolicyParams) -> std::io::Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl TrainingSink for NullSink {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub report: TrainingReport,
    pub history: Vec<EpisodeMetrics>,
}

/// Episode seed for training episode `index`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    mix_seed(mix_seed(seed, EPISODE_STREAM), index as u64)
}

/// Task sampler stream for a run seed.
pub fn task_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, TASK_STREAM))
}

pub struct Trainer<'a> {
    pool: &'a AgentPool,
    env: &'a dyn Environment,
    orchestrator: OrchestratorConfig,
    reward: RewardConfig,
    config: TrainerConfig,
}

impl<'a> Trainer<'a> {
    pub fn new(
        pool: &'a AgentPool,
        env: &'a dyn Environment,
        orchestrator: OrchestratorConfig,
        reward: RewardConfig,
        config: TrainerConfig,
    ) -> Result<Self, TrainerError> {
        orchestrator.validate()?;
        reward.validate()?;
        config.validate()?;
        let reward = reward.resolved(orchestrator.max_depth);
        Ok(Self {
            pool,
            env,
            orchestrator,
            reward,
            config,
        })
    }

    pub fn reward(&self) -> &RewardConfig {
        &self.reward
    }

    /// Runs `episodes` episodes, updating `params` after every batch.
    pub fn train(&self, params: &mut PolicyParams, sink: &mut dyn TrainingSink) -> Result<TrainingRun, TrainerError> {
        let started = Instant::now();
        let orch = Orchestrator::new(self.pool, &self.orchestrator, self.env.backend())?;
        params.check_shape(self.pool.len(), orch.featurizer().len())?;
        let mut tasks = task_rng(self.config.seed);
        let mut history = Vec::with_capacity(self.config.episodes);
        let mut batch: Vec<Trajectory> = Vec::new();
        let mut batches = 0;
        let mut recent: VecDeque<f64> = VecDeque::new();

        for index in 0..self.config.episodes {
            let task = self.env.sample_task(&mut tasks);
            let seed = episode_seed(self.config.seed, index);
            let episode = orch.run_episode(&task, params, self.env.scorer(), seed)?;
            let metrics = EpisodeMetrics::from_episode(index, &episode, self.pool, &self.reward);
            sink.on_episode(&metrics, &episode)?;
            history.push(metrics);
            batch.extend(episode.trajectories);

            if batch.len() < self.config.batch_size && index + 1 < self.config.episodes {
                continue;
            }
            let b = match self.config.baseline {
                Baseline::None => 0.0,
                Baseline::MovingAverage { .. } if recent.is_empty() => 0.0,
                Baseline::MovingAverage { .. } => recent.iter().sum::<f64>() / recent.len() as f64,
            };
            let grad = batch_gradient(&batch, params, &self.reward, &self.config, b)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainerError::NonFiniteGradient {
                    batch: batches,
                    dump: dump_batch(&batch, &self.reward),
                });
            }
            params.ascend(&grad, self.config.learning_rate);
            params.validate()?;
            if let Baseline::MovingAverage { window } = self.config.baseline {
                for traj in &batch {
                    recent.push_back(trajectory_return(traj, &self.reward));
                    if recent.len() > window {
                        recent.pop_front();
                    }
                }
            }
            batches += 1;
            if self.config.checkpoint_every > 0 && batches % self.config.checkpoint_every == 0 {
                sink.on_checkpoint(batches, params)?;
            }
            batch.clear();
        }

        let report = TrainingReport::from_history(&history, batches, started.elapsed().as_secs_f64());
        log::info!(
            "trained {} episodes in {} batches; final mean reward {:.4}",
            report.episodes,
            batches,
            report.final_mean_reward
        );
        Ok(TrainingRun { report, history })
    }

    /// Runs `episodes` episodes with frozen parameters.
    pub fn evaluate(&self, policy: &dyn ActionPolicy, episodes: usize) -> Result<Vec<EpisodeMetrics>, TrainerError> {
        let orch = Orchestrator::new(self.pool, &self.orchestrator, self.env.backend())?;
        let mut tasks = task_rng(self.config.seed);
        (0..episodes)
            .map(|index| {
                let task = self.env.sample_task(&mut tasks);
                let episode = orch.run_episode(&task, policy, self.env.scorer(), episode_seed(self.config.seed, index))?;
                Ok(EpisodeMetrics::from_episode(index, &episode, self.pool, &self.reward))
            })
            .collect()
    }
}

fn dump_batch(batch: &[Trajectory], reward: &RewardConfig) -> String {
    batch
        .iter()
        .map(|t| {
            let ids: Vec<&str> = t.steps.iter().map(|s| s.agent_id.as_str()).collect();
            let log_probs: Vec<f64> = t.steps.iter().map(|s| s.log_prob).collect();
            format!(
                "task={} branch={} r={} R0={} agents={:?} log_probs={:?}",
                t.task.id,
                t.branch,
                t.terminal_reward,
                trajectory_return(t, reward),
                ids,
                log_probs
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
