//! The seam between the orchestrator and whatever actually runs an agent.

use thiserror::Error;

use crate::agent::{AgentError, AgentOutput, AgentPool};
use crate::gateway::GatewayError;
use crate::orchestrator::SystemState;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("backend has no behaviour for agent `{0}`")]
    Uncovered(String),
}

/// Executes agents on behalf of the orchestrator.
///
/// `seed` is the branch seed; simulated backends combine it with the state
/// digest so that outputs are a pure function of `(seed, state)`.
pub trait AgentBackend: Sync {
    fn execute(
        &self,
        pool: &AgentPool,
        agent_index: usize,
        state: &SystemState,
        seed: u64,
    ) -> Result<AgentOutput, BackendError>;

    /// Whether `execute` is deterministic in its inputs, which replay relies on.
    fn is_deterministic(&self) -> bool {
        false
    }
}
