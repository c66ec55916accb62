use thiserror::Error;

use super::{branch_answer, finish_episode, Orchestrator, StepRecord, SystemState};
use crate::backend::BackendError;
use crate::scoring::Scorer;
use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("backend is not deterministic; only simulated episodes can be replayed")]
    NonDeterministicBackend,
    #[error("replay mismatch in branch {branch} at step {step}: {detail}")]
    Mismatch {
        branch: usize,
        step: usize,
        detail: String,
    },
    #[error("replay of branch {branch} failed at step {step}: {source}")]
    Backend {
        branch: usize,
        step: usize,
        #[source]
        source: BackendError,
    },
}

pub(super) fn replay(
    orch: &Orchestrator<'_>,
    log: &[Trajectory],
    scorer: &dyn Scorer,
) -> Result<super::EpisodeResult, ReplayError> {
    let Some(first) = log.first() else {
        return Ok(super::EpisodeResult::empty());
    };
    if !orch.backend.is_deterministic() {
        return Err(ReplayError::NonDeterministicBackend);
    }
    let pool = orch.pool;
    let mut replayed = Vec::with_capacity(log.len());
    for recorded in log {
        let branch = recorded.branch;
        let mismatch = |step: usize, detail: String| ReplayError::Mismatch { branch, step, detail };
        let mut state = SystemState::new(recorded.task.clone(), branch);
        let mut steps = Vec::with_capacity(recorded.steps.len());
        for (i, logged) in recorded.steps.iter().enumerate() {
            if logged.digest_before != state.digest() {
                return Err(mismatch(
                    i,
                    format!("state digest {} != logged {}", state.digest(), logged.digest_before),
                ));
            }
            let features = orch.featurizer.featurize(&state);
            let record = if pool.is_terminator(logged.agent_index) {
                StepRecord {
                    agent_index: logged.agent_index,
                    output: String::new(),
                    tokens: 0,
                    latent_correct: None,
                }
            } else {
                let out = orch
                    .backend
                    .execute(pool, logged.agent_index, &state, recorded.seed)
                    .map_err(|source| ReplayError::Backend { branch, step: i, source })?;
                StepRecord {
                    agent_index: logged.agent_index,
                    output: out.text,
                    tokens: out.tokens,
                    latent_correct: out.latent_correct,
                }
            };
            if record.output != logged.output {
                return Err(mismatch(i, "agent output differs from the log".into()));
            }
            if record.tokens != logged.tokens {
                return Err(mismatch(
                    i,
                    format!("token count {} != logged {}", record.tokens, logged.tokens),
                ));
            }
            state.push(record);
            if state.digest() != logged.digest_after {
                return Err(mismatch(i, "post-step digest differs from the log".into()));
            }
            let mut step = logged.clone();
            step.latent_correct = state.steps().last().and_then(|r| r.latent_correct);
            step.features = Some(features);
            steps.push(step);
        }
        let mut traj = recorded.clone();
        traj.answer = branch_answer(&steps);
        traj.steps = steps;
        replayed.push(traj);
    }
    let result = finish_episode(first.episode_seed, &first.task, replayed, Vec::new(), scorer);
    for recorded in log {
        if result.terminal_reward.to_bits() != recorded.terminal_reward.to_bits() {
            return Err(ReplayError::Mismatch {
                branch: recorded.branch,
                step: recorded.steps.len(),
                detail: format!(
                    "terminal reward {} != logged {}",
                    result.terminal_reward, recorded.terminal_reward
                ),
            });
        }
    }
    Ok(result)
}
