use serde::{Deserialize, Serialize};

use crate::digest::StateDigest;
use crate::task::TaskSpec;

/// One appended step of a system state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub agent_index: usize,
    pub output: String,
    pub tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_correct: Option<bool>,
}

/// The global state of one branch: the task plus everything done so far.
///
/// The digest is maintained incrementally by [`SystemState::push`], so two
/// states built from the same task and the same ordered steps always share a
/// digest regardless of branch id.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    task: TaskSpec,
    steps: Vec<StepRecord>,
    branch_id: usize,
    digest: StateDigest,
}

impl SystemState {
    pub fn new(task: TaskSpec, branch_id: usize) -> Self {
        let digest = StateDigest::of_task(&task.id);
        Self {
            task,
            steps: Vec::new(),
            branch_id,
            digest,
        }
    }

    /// Applies the state update for one step output.
    pub fn push(&mut self, record: StepRecord) {
        self.digest = self
            .digest
            .extend(record.agent_index, &record.output, record.latent_correct);
        self.steps.push(record);
    }

    /// Consuming form of [`SystemState::push`].
    pub fn with_step(mut self, record: StepRecord) -> Self {
        self.push(record);
        self
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn branch_id(&self) -> usize {
        self.branch_id
    }

    pub fn digest(&self) -> StateDigest {
        self.digest
    }

    pub fn last_agent(&self) -> Option<usize> {
        self.steps.last().map(|s| s.agent_index)
    }

    /// Latent correctness after the most recent step that reported one.
    pub fn latent_correct(&self) -> bool {
        self.steps
            .iter()
            .rev()
            .find_map(|s| s.latent_correct)
            .unwrap_or(false)
    }

    pub fn activation_counts(&self, pool_size: usize) -> Vec<usize> {
        let mut counts = vec![0; pool_size];
        for step in &self.steps {
            if let Some(c) = counts.get_mut(step.agent_index) {
                *c += 1;
            }
        }
        counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.steps.iter().map(|s| s.tokens).sum()
    }

    /// Non-empty step outputs joined in order, as fed back to later agents.
    pub fn previous_reasoning(&self) -> String {
        self.steps
            .iter()
            .map(|s| s.output.as_str())
            .filter(|o| !o.is_empty())
            .collect::<Vec<_>>()
            .join("\n")
    }
}
