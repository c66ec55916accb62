//! The agent space: agents as (backend, reasoning pattern, tool) triples,
//! the pool the policy chooses from, and the simulated agent behaviour used
//! for desk-scale training.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{fnv1a, unit_draw, StateDigest};

/// Decoding temperature used for remote agents that do not set their own.
pub const DEFAULT_AGENT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningPattern {
    Planning,
    Reasoning,
    Critique,
    Reflect,
    Question,
    Summarize,
    Conclude,
    Modify,
    Terminate,
}

impl ReasoningPattern {
    /// The eight non-terminal patterns, in roster order.
    pub const ROSTER: [ReasoningPattern; 8] = [
        ReasoningPattern::Reasoning,
        ReasoningPattern::Critique,
        ReasoningPattern::Reflect,
        ReasoningPattern::Question,
        ReasoningPattern::Summarize,
        ReasoningPattern::Conclude,
        ReasoningPattern::Modify,
        ReasoningPattern::Planning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningPattern::Planning => "planning",
            ReasoningPattern::Reasoning => "reasoning",
            ReasoningPattern::Critique => "critique",
            ReasoningPattern::Reflect => "reflect",
            ReasoningPattern::Question => "question",
            ReasoningPattern::Summarize => "summarize",
            ReasoningPattern::Conclude => "conclude",
            ReasoningPattern::Modify => "modify",
            ReasoningPattern::Terminate => "terminate",
        }
    }
}

impl fmt::Display for ReasoningPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    ReadFile,
    SearchArxiv,
    SearchBing,
    AccessWebsite,
    RunPython,
    #[default]
    None,
}

impl Tool {
    pub const ALL: [Tool; 5] = [
        Tool::ReadFile,
        Tool::SearchArxiv,
        Tool::SearchBing,
        Tool::AccessWebsite,
        Tool::RunPython,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::ReadFile => "read_file",
            Tool::SearchArxiv => "search_arxiv",
            Tool::SearchBing => "search_bing",
            Tool::AccessWebsite => "access_website",
            Tool::RunPython => "run_python",
            Tool::None => "none",
        }
    }
}

fn is_no_tool(tool: &Tool) -> bool {
    *tool == Tool::None
}

/// One activatable agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    /// Simulated profile name or remote model name.
    pub model_ref: String,
    pub reasoning_pattern: ReasoningPattern,
    #[serde(default, skip_serializing_if = "is_no_tool")]
    pub tool: Tool,
    /// Per-activation cost scale charged by the return recursion.
    #[serde(default)]
    pub cost_factor: f64,
    /// Remote decoding temperature; falls back to [`DEFAULT_AGENT_TEMPERATURE`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>, model_ref: impl Into<String>, pattern: ReasoningPattern) -> Self {
        Self {
            id: id.into(),
            model_ref: model_ref.into(),
            reasoning_pattern: pattern,
            tool: Tool::None,
            cost_factor: 1.0,
            temperature: None,
        }
    }

    pub fn with_tool(mut self, tool: Tool) -> Self {
        self.tool = tool;
        self
    }

    pub fn with_cost(mut self, cost_factor: f64) -> Self {
        self.cost_factor = cost_factor;
        self
    }

    pub fn terminator() -> Self {
        Self {
            id: "terminator".into(),
            model_ref: "none".into(),
            reasoning_pattern: ReasoningPattern::Terminate,
            tool: Tool::None,
            cost_factor: 0.0,
            temperature: None,
        }
    }

    pub fn is_terminator(&self) -> bool {
        self.reasoning_pattern == ReasoningPattern::Terminate
    }

    pub fn temperature(&self) -> f64 {
        self.temperature.unwrap_or(DEFAULT_AGENT_TEMPERATURE)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("duplicate agent id `{0}`")]
    DuplicateId(String),
    #[error("pool needs at least one non-terminator agent")]
    NoAgents,
    #[error("agent `{0}` uses the terminate pattern; declare it in the terminator slot")]
    StrayTerminator(String),
    #[error("terminator slot holds `{0}`, which does not use the terminate pattern")]
    NotATerminator(String),
    #[error("agent `{id}`: {reason}")]
    InvalidAgent { id: String, reason: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("the terminator cannot be executed")]
    TerminatorExecuted,
}

/// Pool configuration as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminator: Option<AgentSpec>,
}

/// The ordered agent space. Action indices refer to positions in this pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPool")]
pub struct AgentPool {
    agents: Vec<AgentSpec>,
    terminator_index: usize,
}

#[derive(Deserialize)]
struct RawPool {
    agents: Vec<AgentSpec>,
    terminator_index: usize,
}

impl TryFrom<RawPool> for AgentPool {
    type Error = AgentError;

    fn try_from(raw: RawPool) -> Result<Self, Self::Error> {
        let terminators: Vec<usize> = raw
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_terminator())
            .map(|(i, _)| i)
            .collect();
        if terminators != [raw.terminator_index] {
            return Err(AgentError::InvalidAgent {
                id: "<pool>".into(),
                reason: format!(
                    "terminator_index {} does not name the single terminator",
                    raw.terminator_index
                ),
            });
        }
        if raw.agents.len() < 2 {
            return Err(AgentError::NoAgents);
        }
        validate_agents(&raw.agents)?;
        Ok(AgentPool {
            agents: raw.agents,
            terminator_index: raw.terminator_index,
        })
    }
}

fn validate_agents(agents: &[AgentSpec]) -> Result<(), AgentError> {
    let mut seen = HashSet::new();
    for agent in agents {
        if !seen.insert(agent.id.as_str()) {
            return Err(AgentError::DuplicateId(agent.id.clone()));
        }
        if !(agent.cost_factor.is_finite() && agent.cost_factor >= 0.0) {
            return Err(AgentError::InvalidAgent {
                id: agent.id.clone(),
                reason: format!("cost_factor must be finite and >= 0, got {}", agent.cost_factor),
            });
        }
        if agent.is_terminator() && agent.tool != Tool::None {
            return Err(AgentError::InvalidAgent {
                id: agent.id.clone(),
                reason: "the terminator cannot carry a tool".into(),
            });
        }
        if let Some(t) = agent.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return Err(AgentError::InvalidAgent {
                    id: agent.id.clone(),
                    reason: format!("temperature must be finite and >= 0, got {t}"),
                });
            }
        }
    }
    Ok(())
}

/// Builds a pool from config: configured agents in order, then the terminator.
pub fn build_pool(config: &PoolConfig) -> Result<AgentPool, AgentError> {
    if config.agents.is_empty() {
        return Err(AgentError::NoAgents);
    }
    if let Some(stray) = config.agents.iter().find(|a| a.is_terminator()) {
        return Err(AgentError::StrayTerminator(stray.id.clone()));
    }
    let terminator = config.terminator.clone().unwrap_or_else(AgentSpec::terminator);
    if !terminator.is_terminator() {
        return Err(AgentError::NotATerminator(terminator.id));
    }
    let mut agents = config.agents.clone();
    agents.push(terminator);
    validate_agents(&agents)?;
    let terminator_index = agents.len() - 1;
    Ok(AgentPool {
        agents,
        terminator_index,
    })
}

impl AgentPool {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn get(&self, index: usize) -> Option<&AgentSpec> {
        self.agents.get(index)
    }

    pub fn terminator_index(&self) -> usize {
        self.terminator_index
    }

    pub fn is_terminator(&self, index: usize) -> bool {
        index == self.terminator_index
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn max_cost_factor(&self) -> f64 {
        self.agents.iter().map(|a| a.cost_factor).fold(0.0, f64::max)
    }

    /// Hash of the agent ids in pool order.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        for agent in &self.agents {
            bytes.extend_from_slice(agent.id.as_bytes());
            bytes.push(0);
        }
        fnv1a(&bytes)
    }
}

/// Behaviour of a simulated agent backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimProfile {
    pub improve_prob: f64,
    #[serde(default)]
    pub degrade_prob: f64,
    /// Tokens emitted per activation.
    pub emit_cost: u64,
    #[serde(default = "default_true")]
    pub seedable: bool,
}

fn default_true() -> bool {
    true
}

impl SimProfile {
    pub fn new(improve_prob: f64, degrade_prob: f64, emit_cost: u64) -> Self {
        Self {
            improve_prob,
            degrade_prob,
            emit_cost,
            seedable: true,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !unit(self.improve_prob) || !unit(self.degrade_prob) {
            return Err(AgentError::InvalidProfile(format!(
                "probabilities must lie in [0, 1] (improve {}, degrade {})",
                self.improve_prob, self.degrade_prob
            )));
        }
        if self.improve_prob + self.degrade_prob > 1.0 + 1e-12 {
            return Err(AgentError::InvalidProfile(format!(
                "improve_prob + degrade_prob = {} exceeds 1",
                self.improve_prob + self.degrade_prob
            )));
        }
        Ok(())
    }
}

/// Effect of one simulated activation on the latent task state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentDelta {
    Improve,
    Degrade,
    Unchanged,
}

impl LatentDelta {
    pub fn apply(self, current: bool) -> bool {
        match self {
            LatentDelta::Improve => true,
            LatentDelta::Degrade => false,
            LatentDelta::Unchanged => current,
        }
    }
}

/// What any backend returns for one activation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutput {
    pub text: String,
    pub tokens: u64,
    /// Latent correctness after this step; simulated backends only.
    pub latent_correct: Option<bool>,
    /// Token count was estimated rather than reported by the backend.
    pub usage_estimated: bool,
}

/// A simulated activation together with its latent effect.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub output: AgentOutput,
    pub delta: LatentDelta,
}

/// Runs one simulated activation. Pure in `(agent, profile, digest, seed)`.
pub fn execute_simulated(
    agent: &AgentSpec,
    profile: &SimProfile,
    state_digest: StateDigest,
    seed: u64,
) -> Result<SimOutcome, AgentError> {
    if agent.is_terminator() {
        return Err(AgentError::TerminatorExecuted);
    }
    let u = unit_draw(seed, state_digest);
    let delta = if u < profile.improve_prob {
        LatentDelta::Improve
    } else if u < profile.improve_prob + profile.degrade_prob {
        LatentDelta::Degrade
    } else {
        LatentDelta::Unchanged
    };
    let verdict = match delta {
        LatentDelta::Improve => "moved the solution forward",
        LatentDelta::Degrade => "introduced an error",
        LatentDelta::Unchanged => "left the solution as it was",
    };
    let tool = match agent.tool {
        Tool::None => String::new(),
        t => format!(" using {}", t.as_str()),
    };
    let text = format!(
        "REASONING RESULT: {} by {}{} on {}; {}.",
        agent.reasoning_pattern, agent.id, tool, agent.model_ref, verdict
    );
    Ok(SimOutcome {
        output: AgentOutput {
            text,
            tokens: profile.emit_cost,
            latent_correct: None,
            usage_estimated: false,
        },
        delta,
    })
}
