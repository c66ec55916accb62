//! Seeded synthetic environments.
//!
//! Every task carries a latent correctness bit. Agents move it according to
//! the env's latent model, and each agent's output ends in a
//! `FINAL ANSWER:` line that is the ground truth when the bit is set and a
//! fixed wrong answer otherwise. Wrong answers are deterministic per task,
//! so failing branches agree with each other under majority vote.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    build_pool, execute_simulated, AgentError, AgentOutput, AgentPool, AgentSpec, LatentDelta, PoolConfig,
    ReasoningPattern, SimProfile, Tool,
};
use crate::backend::{AgentBackend, BackendError};
use crate::digest::{fnv1a, mix_seed, splitmix64, unit_draw};
use crate::orchestrator::SystemState;
use crate::scoring::{Scorer, TaskScorer};
use crate::task::{Domain, TaskSpec};

const ROUTE_STREAM: u64 = 0x0c4a_1400;
const NONCE_STREAM: u64 = 0x6e0c;

/// Task source plus the backend and scorer that go with it.
pub trait Environment: Sync {
    fn sample_task(&self, rng: &mut ChaCha8Rng) -> TaskSpec;
    fn backend(&self) -> &dyn AgentBackend;
    fn scorer(&self) -> &dyn Scorer;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub agents: Vec<String>,
    pub success_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentModel {
    /// Correct iff the most recent activation drew an improvement.
    Bandit,
    /// Correct once some route has been activated in order (as a
    /// subsequence) and its success draw came up.
    Chain { routes: Vec<Route> },
    /// Sticky latent moved by each agent's improve/degrade draw.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    pub latent_model: LatentModel,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default = "default_task_count")]
    pub task_count: usize,
    /// Agent id to simulated behaviour.
    pub profiles: BTreeMap<String, SimProfile>,
}

fn default_task_count() -> usize {
    1000
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("env `{env}` has no profile for agent `{agent}`")]
    MissingProfile { env: String, agent: String },
    #[error("route references unknown agent `{0}`")]
    UnknownRouteAgent(String),
    #[error("invalid env: {0}")]
    Invalid(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl EnvSpec {
    pub fn validate(&self, pool: &AgentPool) -> Result<(), EnvError> {
        if self.task_count == 0 {
            return Err(EnvError::Invalid("task_count must be >= 1".into()));
        }
        for agent in pool.agents().iter().filter(|a| !a.is_terminator()) {
            if !self.profiles.contains_key(&agent.id) {
                return Err(EnvError::MissingProfile {
                    env: self.name.clone(),
                    agent: agent.id.clone(),
                });
            }
        }
        for profile in self.profiles.values() {
            profile.validate()?;
        }
        if let LatentModel::Chain { routes } = &self.latent_model {
            for route in routes {
                if route.agents.is_empty() || !(0.0..=1.0).contains(&route.success_prob) {
                    return Err(EnvError::Invalid("routes need agents and a success_prob in [0, 1]".into()));
                }
                if let Some(a) = route.agents.iter().find(|a| pool.index_of(a).is_none()) {
                    return Err(EnvError::UnknownRouteAgent(a.clone()));
                }
            }
        }
        Ok(())
    }

    /// The task at `index` of this env's task space.
    pub fn task(&self, index: usize) -> TaskSpec {
        let h = splitmix64(fnv1a(self.name.as_bytes()) ^ index as u64);
        let a = h % 900 + 100;
        let b = (h >> 20) % 90 + 10;
        let id = format!("{}-{index}", self.name);
        match self.domain {
            Domain::Closed => TaskSpec::closed(id, format!("Task {index}: what is {a} plus {b}?"), (a + b).to_string()),
            Domain::Open => {
                let words = ["river", "stone", "light", "garden", "engine", "signal", "harbor", "lantern"];
                let pick = |s: u64| words[(s % words.len() as u64) as usize];
                let reference = format!("the {} near the {} keeps the {} {}", pick(a), pick(b), pick(h >> 40), pick(h >> 50));
                TaskSpec::open(id, format!("Task {index}: write a sentence about {a} and {b}."), Some(reference))
            }
        }
    }

    /// All tasks, in index order.
    pub fn tasks(&self) -> impl Iterator<Item = TaskSpec> + '_ {
        (0..self.task_count).map(|i| self.task(i))
    }
}

/// Answer produced when the latent bit is unset.
pub fn wrong_answer(task: &TaskSpec) -> String {
    let truth = task.ground_truth.clone().unwrap_or_default();
    match task.domain {
        Domain::Closed => match truth.trim().parse::<i64>() {
            Ok(v) => (v + 1).to_string(),
            Err(_) => format!("not {truth}"),
        },
        Domain::Open => {
            let words: Vec<&str> = truth.split_whitespace().collect();
            let keep = words.len() / 2;
            let mut out: Vec<&str> = words[..keep].to_vec();
            out.extend(["and", "nothing", "else"]);
            out.join(" ")
        }
    }
}

/// A simulated environment: task sampler, deterministic backend and scorer.
#[derive(Debug)]
pub struct SimEnv {
    spec: EnvSpec,
    route_indices: Vec<Vec<usize>>,
    nonce: AtomicU64,
}

impl SimEnv {
    pub fn new(spec: EnvSpec, pool: &AgentPool) -> Result<Self, EnvError> {
        spec.validate(pool)?;
        let route_indices = match &spec.latent_model {
            LatentModel::Chain { routes } => routes
                .iter()
                .map(|r| r.agents.iter().map(|a| pool.index_of(a).expect("validated")).collect())
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            route_indices,
            nonce: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn chain_latent(&self, state: &SystemState, agent_index: usize, seed: u64) -> bool {
        let LatentModel::Chain { routes } = &self.spec.latent_model else {
            unreachable!()
        };
        if state.latent_correct() {
            return true;
        }
        let before: Vec<usize> = state.steps().iter().map(|s| s.agent_index).collect();
        let mut after = before.clone();
        after.push(agent_index);
        routes.iter().zip(&self.route_indices).enumerate().any(|(r, (route, idx))| {
            let newly = is_subsequence(idx, &after) && !is_subsequence(idx, &before);
            newly && unit_draw(mix_seed(seed, ROUTE_STREAM + r as u64), state.digest()) < route.success_prob
        })
    }
}

/// `needle` occurs in `hay` in order, not necessarily contiguously.
pub fn is_subsequence(needle: &[usize], hay: &[usize]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

impl AgentBackend for SimEnv {
    fn execute(
        &self,
        pool: &AgentPool,
        agent_index: usize,
        state: &SystemState,
        seed: u64,
    ) -> Result<AgentOutput, BackendError> {
        let agent: &AgentSpec = pool
            .get(agent_index)
            .ok_or_else(|| BackendError::Uncovered(format!("agent index {agent_index}")))?;
        let profile = self
            .spec
            .profiles
            .get(&agent.id)
            .ok_or_else(|| BackendError::Uncovered(agent.id.clone()))?;
        let seed = if profile.seedable {
            seed
        } else {
            mix_seed(seed ^ self.nonce.fetch_add(1, Ordering::Relaxed), NONCE_STREAM)
        };
        let outcome = execute_simulated(agent, profile, state.digest(), seed)?;
        let latent = match &self.spec.latent_model {
            LatentModel::Bandit => outcome.delta == LatentDelta::Improve,
            LatentModel::Noisy => outcome.delta.apply(state.latent_correct()),
            LatentModel::Chain { .. } => self.chain_latent(state, agent_index, seed),
        };
        let task = state.task();
        let answer = if latent {
            task.ground_truth.clone().unwrap_or_default()
        } else {
            wrong_answer(task)
        };
        let mut output = outcome.output;
        output.text = format!("{}\nFINAL ANSWER: {answer}.", output.text);
        output.latent_correct = Some(latent);
        Ok(output)
    }

    fn is_deterministic(&self) -> bool {
        self.spec.profiles.values().all(|p| p.seedable)
    }
}

impl Environment for SimEnv {
    fn sample_task(&self, rng: &mut ChaCha8Rng) -> TaskSpec {
        self.spec.task(rng.random_range(0..self.spec.task_count))
    }

    fn backend(&self) -> &dyn AgentBackend {
        self
    }

    fn scorer(&self) -> &dyn Scorer {
        &TaskScorer
    }
}

/// A pool together with the env it is meant for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub pool: PoolConfig,
    pub env: EnvSpec,
}

impl Scenario {
    pub fn build(&self) -> Result<(AgentPool, SimEnv), EnvError> {
        let pool = build_pool(&self.pool)?;
        let env = SimEnv::new(self.env.clone(), &pool)?;
        Ok((pool, env))
    }
}

/// Shipped scenarios.
pub mod presets {
    use super::*;

    fn reasoner(id: &str, cost: f64) -> AgentSpec {
        AgentSpec::new(id, "sim-base", ReasoningPattern::Reasoning).with_cost(cost)
    }

    fn scenario(name: &str, agents: Vec<AgentSpec>, model: LatentModel, profiles: &[(&str, SimProfile)]) -> Scenario {
        Scenario {
            pool: PoolConfig {
                agents,
                terminator: None,
            },
            env: EnvSpec {
                name: name.into(),
                latent_model: model,
                domain: Domain::Closed,
                task_count: 1000,
                profiles: profiles.iter().map(|(id, p)| (id.to_string(), p.clone())).collect(),
            },
        }
    }

    /// One strong agent among weak ones, equal costs.
    pub fn bandit() -> Scenario {
        scenario(
            "bandit",
            vec![reasoner("A", 1.0), reasoner("B", 1.0), reasoner("C", 1.0)],
            LatentModel::Bandit,
            &[
                ("A", SimProfile::new(0.9, 0.0, 100)),
                ("B", SimProfile::new(0.1, 0.0, 100)),
                ("C", SimProfile::new(0.1, 0.0, 100)),
            ],
        )
    }

    /// A one-step route that solves 70% of tasks and a three-step route
    /// that solves all of them.
    pub fn efficiency_chain() -> Scenario {
        let profiles: Vec<(&str, SimProfile)> =
            ["A", "B", "C", "D"].iter().map(|id| (*id, SimProfile::new(0.0, 0.0, 100))).collect();
        scenario(
            "efficiency-chain",
            vec![reasoner("A", 1.0), reasoner("B", 1.0), reasoner("C", 1.0), reasoner("D", 1.0)],
            LatentModel::Chain {
                routes: vec![
                    Route {
                        agents: vec!["A".into()],
                        success_prob: 0.7,
                    },
                    Route {
                        agents: vec!["B".into(), "C".into(), "D".into()],
                        success_prob: 1.0,
                    },
                ],
            },
            &profiles,
        )
    }

    /// A single route through `k` distinct agents, plus one distractor.
    pub fn chain(k: usize) -> Scenario {
        let ids: Vec<String> = (0..=k).map(|i| format!("P{i}")).collect();
        let profiles: Vec<(&str, SimProfile)> = ids.iter().map(|id| (id.as_str(), SimProfile::new(0.0, 0.0, 100))).collect();
        scenario(
            &format!("chain-{k}"),
            ids.iter().map(|id| reasoner(id, 1.0)).collect(),
            LatentModel::Chain {
                routes: vec![Route {
                    agents: ids[..k].to_vec(),
                    success_prob: 1.0,
                }],
            },
            &profiles,
        )
    }

    /// Two equally capable agents, one five times as expensive.
    pub fn cheap_vs_expensive() -> Scenario {
        scenario(
            "cheap-vs-expensive",
            vec![reasoner("cheap", 1.0), reasoner("pricey", 5.0)],
            LatentModel::Noisy,
            &[
                ("cheap", SimProfile::new(0.8, 0.0, 50)),
                ("pricey", SimProfile::new(0.8, 0.0, 250)),
            ],
        )
    }

    /// Revisiting the reasoner after a critique raises the success rate.
    pub fn critic_loop() -> Scenario {
        let route = |agents: &[&str], p: f64| Route {
            agents: agents.iter().map(|a| a.to_string()).collect(),
            success_prob: p,
        };
        scenario(
            "critic-loop",
            vec![
                reasoner("reasoner", 1.0),
                AgentSpec::new("critic", "sim-base", ReasoningPattern::Critique).with_cost(1.0),
                AgentSpec::new("summarizer", "sim-base", ReasoningPattern::Summarize).with_cost(1.0),
            ],
            LatentModel::Chain {
                routes: vec![
                    route(&["reasoner"], 0.3),
                    route(&["reasoner", "critic"], 0.6),
                    route(&["reasoner", "critic", "reasoner"], 0.95),
                ],
            },
            &[
                ("reasoner", SimProfile::new(0.0, 0.0, 120)),
                ("critic", SimProfile::new(0.0, 0.0, 80)),
                ("summarizer", SimProfile::new(0.0, 0.0, 60)),
            ],
        )
    }

    /// Eight reasoning patterns and five tools over a mixed set of models.
    pub fn full_roster() -> Scenario {
        let models = ["sim-large", "sim-medium", "sim-small"];
        let mut agents = Vec::new();
        let mut profiles = Vec::new();
        for (i, pattern) in ReasoningPattern::ROSTER.iter().enumerate() {
            let model = models[i % models.len()];
            let cost = [3.0, 1.5, 0.5][i % 3];
            agents.push(AgentSpec::new(pattern.as_str(), model, *pattern).with_cost(cost));
            let improve = [0.7, 0.5, 0.3][i % 3];
            profiles.push((pattern.as_str(), SimProfile::new(improve, 0.05, [400, 200, 80][i % 3])));
        }
        for (i, tool) in Tool::ALL.iter().enumerate() {
            let model = models[i % models.len()];
            agents.push(
                AgentSpec::new(tool.as_str(), model, ReasoningPattern::Reasoning)
                    .with_tool(*tool)
                    .with_cost(2.0),
            );
            profiles.push((tool.as_str(), SimProfile::new(0.6, 0.05, 300)));
        }
        scenario("full-roster", agents, LatentModel::Noisy, &profiles)
    }

    pub fn by_name(name: &str) -> Option<Scenario> {
        Some(match name {
            "bandit" => bandit(),
            "efficiency-chain" => efficiency_chain(),
            "cheap-vs-expensive" => cheap_vs_expensive(),
            "critic-loop" => critic_loop(),
            "full-roster" => full_roster(),
            _ => return None,
        })
    }

    pub const NAMES: [&str; 5] = [
        "bandit",
        "efficiency-chain",
        "cheap-vs-expensive",
        "critic-loop",
        "full-roster",
    ];
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn subsequence() {
        assert!(is_subsequence(&[1, 2, 1], &[1, 0, 2, 2, 1]));
        assert!(!is_subsequence(&[1, 2, 1], &[1, 2, 2]));
        assert!(is_subsequence(&[], &[]));
    }

    #[test]
    fn sampling_is_seeded() {
        let (_, env) = presets::bandit().build().unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(env.sample_task(&mut a), env.sample_task(&mut b));
    }

    #[test]
    fn wrong_answers() {
        let t = TaskSpec::closed("t", "x", "41");
        assert_eq!(wrong_answer(&t), "42");
        let o = TaskSpec::open("o", "x", Some("a b c d".into()));
        assert_eq!(wrong_answer(&o), "a b and nothing else");
    }

    #[test]
    fn missing_profile_rejected() {
        let mut s = presets::bandit();
        s.env.profiles.remove("B");
        assert!(matches!(s.build(), Err(EnvError::MissingProfile { .. })));
    }
}
