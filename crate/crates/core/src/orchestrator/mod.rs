//! The episode engine.
//!
//! An episode launches `width` independent branches. Each branch is a chain
//! of [`Orchestrator::step`] calls: featurize the state, ask the policy for a
//! distribution over the pool, sample an agent, execute it and append its
//! output to the state. A branch ends when the terminator is selected, or is
//! forced once the depth budget is spent. Branch answers are aggregated by
//! majority vote and scored once; every branch shares that reward.

mod aggregate;
pub mod episode_log;
mod replay;
mod state;

use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentPool;
use crate::backend::{AgentBackend, BackendError};
use crate::digest::mix_seed;
use crate::policy::{sample_index, ActionPolicy, FeatureVector, Featurizer, PolicyError};
use crate::scoring::Scorer;
use crate::task::TaskSpec;
use crate::trajectory::{Trajectory, TrajectoryStep};

pub use aggregate::{extract_answer, majority_vote, normalize_answer};
pub use replay::ReplayError;
pub use state::{StepRecord, SystemState};

pub const DEFAULT_MAX_DEPTH: usize = 4;
pub const DEFAULT_WIDTH: usize = 3;

const ACTION_STREAM: u64 = 0x00ac_7104;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Maximum trajectory length, terminator included.
    pub max_depth: usize,
    /// Number of independent branches per episode.
    pub width: usize,
    /// Steps that must happen before the terminator becomes eligible.
    pub min_steps: usize,
    pub seed: u64,
    /// Run branches on scoped threads.
    pub parallel: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            width: DEFAULT_WIDTH,
            min_steps: 1,
            seed: 0,
            parallel: false,
        }
    }
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.max_depth == 0 {
            return Err(OrchestratorError::Config("max_depth must be >= 1".into()));
        }
        if self.width == 0 {
            return Err(OrchestratorError::Config("width must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid orchestrator config: {0}")]
    Config(String),
    #[error("task `{0}` is closed-domain but has no ground truth")]
    InvalidTask(String),
    #[error("depth budget exhausted at step {0}")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("branch {branch} failed: {source}")]
    Backend {
        branch: usize,
        #[source]
        source: BackendError,
    },
    #[error("all {0} branches failed")]
    AllBranchesFailed(usize),
}

/// Result of a single [`Orchestrator::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub action: usize,
    pub log_prob: f64,
    pub forced: bool,
    pub features: FeatureVector,
    pub mask: Vec<bool>,
    pub state: SystemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedBranch {
    pub branch: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_seed: u64,
    pub trajectories: Vec<Trajectory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_branches: Vec<FailedBranch>,
    pub final_answer: String,
    pub terminal_reward: f64,
    pub total_tokens: u64,
}

impl EpisodeResult {
    pub fn empty() -> Self {
        Self {
            episode_seed: 0,
            trajectories: Vec::new(),
            failed_branches: Vec::new(),
            final_answer: String::new(),
            terminal_reward: 0.0,
            total_tokens: 0,
        }
    }

    pub fn mean_length(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(|t| t.len()).sum::<usize>() as f64 / self.trajectories.len() as f64
    }
}

/// Binds a pool, a config and a backend.
pub struct Orchestrator<'a> {
    pool: &'a AgentPool,
    config: &'a OrchestratorConfig,
    backend: &'a dyn AgentBackend,
    featurizer: Featurizer,
}

enum BranchError {
    Policy(PolicyError),
    Backend(BackendError),
}

impl<'a> Orchestrator<'a> {
    pub fn new(
        pool: &'a AgentPool,
        config: &'a OrchestratorConfig,
        backend: &'a dyn AgentBackend,
    ) -> Result<Self, OrchestratorError> {
        config.validate()?;
        Ok(Self {
            pool,
            config,
            backend,
            featurizer: Featurizer::new(pool, config.max_depth),
        })
    }

    pub fn pool(&self) -> &AgentPool {
        self.pool
    }

    pub fn config(&self) -> &OrchestratorConfig {
        self.config
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    /// Eligibility mask at step `t`, and whether the terminator is forced.
    pub fn mask_at(&self, t: usize) -> (Vec<bool>, bool) {
        let n = self.pool.len();
        let term = self.pool.terminator_index();
        if t + 1 >= self.config.max_depth {
            let mut mask = vec![false; n];
            mask[term] = true;
            (mask, true)
        } else {
            let mut mask = vec![true; n];
            if t < self.config.min_steps {
                mask[term] = false;
            }
            (mask, false)
        }
    }

    /// Samples an agent for `state`, executes it and returns the updated state.
    pub fn step(
        &self,
        state: SystemState,
        policy: &dyn ActionPolicy,
        rng: &mut ChaCha8Rng,
        seed: u64,
    ) -> Result<StepOutcome, OrchestratorError> {
        if state.step_count() >= self.config.max_depth {
            return Err(OrchestratorError::BudgetExhausted(state.step_count()));
        }
        let branch = state.branch_id();
        self.step_inner(state, policy, rng, seed).map_err(|e| match e {
            BranchError::Policy(p) => OrchestratorError::Policy(p),
            BranchError::Backend(source) => OrchestratorError::Backend { branch, source },
        })
    }

    fn step_inner(
        &self,
        state: SystemState,
        policy: &dyn ActionPolicy,
        rng: &mut ChaCha8Rng,
        seed: u64,
    ) -> Result<StepOutcome, BranchError> {
        let t = state.step_count();
        let features = self.featurizer.featurize(&state);
        let (mask, forced) = self.mask_at(t);
        let probs = policy
            .action_distribution(&features, &mask)
            .map_err(BranchError::Policy)?;
        let action = sample_index(&probs, rng);
        let log_prob = if forced { 0.0 } else { probs[action].ln() };
        let record = if self.pool.is_terminator(action) {
            StepRecord {
                agent_index: action,
                output: String::new(),
                tokens: 0,
                latent_correct: None,
            }
        } else {
            let out = self
                .backend
                .execute(self.pool, action, &state, seed)
                .map_err(BranchError::Backend)?;
            StepRecord {
                agent_index: action,
                output: out.text,
                tokens: out.tokens,
                latent_correct: out.latent_correct,
            }
        };
        Ok(StepOutcome {
            action,
            log_prob,
            forced,
            features,
            mask,
            state: state.with_step(record),
        })
    }

    fn run_branch(
        &self,
        task: &TaskSpec,
        policy: &dyn ActionPolicy,
        episode_seed: u64,
        branch: usize,
    ) -> Result<Trajectory, BranchError> {
        let seed = mix_seed(episode_seed, branch as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, ACTION_STREAM));
        let mut state = SystemState::new(task.clone(), branch);
        let mut steps = Vec::new();
        loop {
            let t = state.step_count();
            let digest_before = state.digest();
            let outcome = self.step_inner(state, policy, &mut rng, seed)?;
            state = outcome.state;
            let record = state.steps().last().expect("step appended");
            let agent = &self.pool.agents()[outcome.action];
            steps.push(TrajectoryStep {
                t,
                agent_index: outcome.action,
                agent_id: agent.id.clone(),
                terminator: agent.is_terminator(),
                forced: outcome.forced,
                log_prob: outcome.log_prob,
                cost_factor: agent.cost_factor,
                output: record.output.clone(),
                tokens: record.tokens,
                latent_correct: record.latent_correct,
                digest_before,
                digest_after: state.digest(),
                mask: outcome.mask,
                features: Some(outcome.features),
            });
            if agent.is_terminator() {
                break;
            }
        }
        Ok(Trajectory {
            task: task.clone(),
            episode_seed,
            branch,
            seed,
            policy_fingerprint: policy.fingerprint(),
            answer: branch_answer(&steps),
            steps,
            terminal_reward: 0.0,
        })
    }

    /// Runs one episode with branch seeds derived from `episode_seed`.
    pub fn run_episode(
        &self,
        task: &TaskSpec,
        policy: &dyn ActionPolicy,
        scorer: &dyn Scorer,
        episode_seed: u64,
    ) -> Result<EpisodeResult, OrchestratorError> {
        if !task.is_valid() {
            return Err(OrchestratorError::InvalidTask(task.id.clone()));
        }
        let width = self.config.width;
        let outcomes: Vec<Result<Trajectory, BranchError>> = if self.config.parallel && width > 1 {
            thread::scope(|scope| {
                let handles: Vec<_> = (0..width)
                    .map(|b| scope.spawn(move || self.run_branch(task, policy, episode_seed, b)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("branch thread panicked"))
                    .collect()
            })
        } else {
            (0..width)
                .map(|b| self.run_branch(task, policy, episode_seed, b))
                .collect()
        };

        let mut trajectories = Vec::with_capacity(width);
        let mut failed_branches = Vec::new();
        for (branch, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(t) => trajectories.push(t),
                Err(BranchError::Policy(e)) => return Err(OrchestratorError::Policy(e)),
                Err(BranchError::Backend(e)) => {
                    log::warn!("branch {branch} failed: {e}");
                    failed_branches.push(FailedBranch {
                        branch,
                        error: e.to_string(),
                    });
                }
            }
        }
        if trajectories.is_empty() {
            return Err(OrchestratorError::AllBranchesFailed(width));
        }
        Ok(finish_episode(episode_seed, task, trajectories, failed_branches, scorer))
    }

    /// Re-executes a logged episode and checks it step by step.
    pub fn replay(&self, log: &[Trajectory], scorer: &dyn Scorer) -> Result<EpisodeResult, ReplayError> {
        replay::replay(self, log, scorer)
    }
}

fn branch_answer(steps: &[TrajectoryStep]) -> String {
    steps
        .iter()
        .rev()
        .find(|s| !s.terminator)
        .map(|s| extract_answer(&s.output))
        .unwrap_or_default()
}

fn finish_episode(
    episode_seed: u64,
    task: &TaskSpec,
    mut trajectories: Vec<Trajectory>,
    failed_branches: Vec<FailedBranch>,
    scorer: &dyn Scorer,
) -> EpisodeResult {
    let answers: Vec<&str> = trajectories.iter().map(|t| t.answer.as_str()).collect();
    let final_answer = majority_vote(&answers);
    let terminal_reward = scorer.score(&final_answer, task).clamp(0.0, 1.0);
    for t in &mut trajectories {
        t.terminal_reward = terminal_reward;
    }
    let total_tokens = trajectories.iter().map(|t| t.total_tokens()).sum();
    EpisodeResult {
        episode_seed,
        trajectories,
        failed_branches,
        final_answer,
        terminal_reward,
        total_tokens,
    }
}

/// Runs one episode using `config.seed` as the episode seed.
pub fn run_episode(
    task: &TaskSpec,
    policy: &dyn ActionPolicy,
    pool: &AgentPool,
    config: &OrchestratorConfig,
    backend: &dyn AgentBackend,
    scorer: &dyn Scorer,
) -> Result<EpisodeResult, OrchestratorError> {
    Orchestrator::new(pool, config, backend)?.run_episode(task, policy, scorer, config.seed)
}
