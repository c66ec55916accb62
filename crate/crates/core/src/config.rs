//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{build_pool, AgentPool, PoolConfig};
use crate::backend::AgentBackend;
use crate::env::{EnvSpec, Environment, SimEnv};
use crate::gateway::{GatewayClient, GatewayConfig, RemoteBackend};
use crate::orchestrator::OrchestratorConfig;
use crate::scoring::{Scorer, TaskScorer};
use crate::task::TaskSpec;
use crate::trainer::{RewardConfig, TrainerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: at `{path}`: {message}")]
    Parse {
        file: String,
        path: String,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Remote backend: endpoint settings plus the tasks to draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub gateway: GatewayConfig,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pool: PoolConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
    #[serde(default)]
    pub orchestrator: OrchestratorConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_log_level")]
    pub log_level: String,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

fn default_log_level() -> String {
    "info".into()
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
}

impl RunConfig {
    /// A simulated-env config with default orchestrator, reward and trainer settings.
    pub fn simulated(pool: PoolConfig, env: EnvSpec) -> Self {
        Self {
            pool,
            env: Some(env),
            remote: None,
            orchestrator: OrchestratorConfig::default(),
            reward: RewardConfig::default(),
            trainer: TrainerConfig::default(),
            output_dir: default_output_dir(),
            log_level: default_log_level(),
        }
    }

    pub fn parse(text: &str, file: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            file: file.to_string(),
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::parse(&text, &path.display().to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.trainer.seed = seed;
            self.orchestrator.seed = seed;
        }
        if let Some(n) = o.episodes {
            self.trainer.episodes = n;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        match (&self.env, &self.remote) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("select exactly one backend: `env` or `remote`, not both".into())),
            (None, None) => return Err(ConfigError::Invalid("select exactly one backend: `env` or `remote`".into())),
            _ => {}
        }
        let pool = build_pool(&self.pool).map_err(|e| invalid(&e))?;
        self.orchestrator.validate().map_err(|e| invalid(&e))?;
        self.reward.validate().map_err(|e| invalid(&e))?;
        self.trainer.validate().map_err(|e| invalid(&e))?;
        if let Some(env) = &self.env {
            env.validate(&pool).map_err(|e| invalid(&e))?;
        }
        if let Some(remote) = &self.remote {
            if remote.tasks.is_empty() || remote.tasks.iter().any(|t| !t.is_valid()) {
                return Err(ConfigError::Invalid("remote.tasks must be non-empty and valid".into()));
            }
            if remote.gateway.endpoint.is_empty() {
                return Err(ConfigError::Invalid("remote.gateway.endpoint is required".into()));
            }
        }
        Ok(())
    }

    /// Builds the pool and the selected backend.
    pub fn build(&self) -> Result<(AgentPool, Box<dyn Environment>), ConfigError> {
        self.validate()?;
        let pool = build_pool(&self.pool).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let env: Box<dyn Environment> = match (&self.env, &self.remote) {
            (Some(spec), _) => Box::new(SimEnv::new(spec.clone(), &pool).map_err(|e| ConfigError::Invalid(e.to_string()))?),
            (_, Some(remote)) => {
                let client =
                    GatewayClient::from_env(remote.gateway.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Box::new(TaskListEnv::new(remote.tasks.clone(), RemoteBackend::new(client)))
            }
            _ => unreachable!("validated"),
        };
        Ok((pool, env))
    }
}

/// A fixed task list paired with any backend.
pub struct TaskListEnv<B> {
    tasks: Vec<TaskSpec>,
    backend: B,
}

impl<B: AgentBackend> TaskListEnv<B> {
    pub fn new(tasks: Vec<TaskSpec>, backend: B) -> Self {
        assert!(!tasks.is_empty(), "task list must not be empty");
        Self { tasks, backend }
    }
}

impl<B: AgentBackend> Environment for TaskListEnv<B> {
    fn sample_task(&self, rng: &mut ChaCha8Rng) -> TaskSpec {
        self.tasks[rng.random_range(0..self.tasks.len())].clone()
    }

    fn backend(&self) -> &dyn AgentBackend {
        &self.backend
    }

    fn scorer(&self) -> &dyn Scorer {
        &TaskScorer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::presets;

    fn bandit_json() -> String {
        let s = presets::bandit();
        serde_json::to_string(&RunConfig::simulated(s.pool, s.env)).unwrap()
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::parse(&bandit_json(), "x").unwrap();
        c.validate().unwrap();
        let again = RunConfig::parse(&serde_json::to_string(&c).unwrap(), "x").unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn field_path_in_errors() {
        let mut v: serde_json::Value = serde_json::from_str(&bandit_json()).unwrap();
        v["trainer"]["batch_size"] = "eight".into();
        let err = RunConfig::parse(&v.to_string(), "cfg.json").unwrap_err();
        assert!(err.to_string().contains("trainer.batch_size"), "{err}");
    }

    #[test]
    fn api_key_field_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&bandit_json()).unwrap();
        v["remote"] = serde_json::json!({"gateway": {"endpoint": "http://x", "api_key": "s"}, "tasks": []});
        let err = RunConfig::parse(&v.to_string(), "cfg.json").unwrap_err();
        assert!(err.to_string().contains("api_key"), "{err}");
    }
}
