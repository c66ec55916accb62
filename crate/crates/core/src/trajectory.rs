use serde::{Deserialize, Serialize};

use crate::digest::StateDigest;
use crate::policy::FeatureVector;
use crate::task::TaskSpec;

/// One decision of a branch, with everything needed to score it later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub agent_index: usize,
    pub agent_id: String,
    pub terminator: bool,
    /// Budget exhaustion forced this step; it carries no score-function term.
    pub forced: bool,
    pub log_prob: f64,
    pub cost_factor: f64,
    pub output: String,
    pub tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_correct: Option<bool>,
    pub digest_before: StateDigest,
    pub digest_after: StateDigest,
    pub mask: Vec<bool>,
    /// Recomputed on replay, never persisted.
    #[serde(skip)]
    pub features: Option<FeatureVector>,
}

/// A single branch of an episode: the unit REINFORCE averages over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: TaskSpec,
    pub episode_seed: u64,
    pub branch: usize,
    /// Branch seed handed to the backend.
    pub seed: u64,
    /// Fingerprint of the policy parameters that sampled this trajectory.
    pub policy_fingerprint: u64,
    pub steps: Vec<TrajectoryStep>,
    /// This branch's extracted answer.
    pub answer: String,
    /// Shared episode reward after aggregation.
    pub terminal_reward: f64,
}

impl Trajectory {
    /// `T`, the number of steps including the terminator.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn cost_factors(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cost_factor).collect()
    }

    pub fn total_tokens(&self) -> u64 {
        self.steps.iter().map(|s| s.tokens).sum()
    }

    /// Agent ids in activation order, terminator excluded.
    pub fn activations(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .filter(|s| !s.terminator)
            .map(|s| s.agent_id.as_str())
    }

    pub fn ends_with_terminator(&self) -> bool {
        self.steps.last().is_some_and(|s| s.terminator)
    }
}
