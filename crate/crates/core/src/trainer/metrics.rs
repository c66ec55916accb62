use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{trajectory_return, RewardConfig, TrainingSink};
use crate::agent::AgentPool;
use crate::orchestrator::episode_log::write_episode;
use crate::orchestrator::EpisodeResult;
use crate::policy::PolicyParams;
use crate::topology::{self, TopologyMetrics};

/// Episodes averaged for the "final" figures of a report.
pub const FINAL_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub reward: f64,
    /// Mean `R_0` over the episode's branches.
    #[serde(rename = "return")]
    pub ret: f64,
    pub tokens: u64,
    /// Mean trajectory length, terminator included.
    pub steps: f64,
    pub answer_correct: bool,
    /// Selection counts per pool position, terminator included.
    pub selections: Vec<u64>,
    pub topology: Option<TopologyMetrics>,
}

impl EpisodeMetrics {
    pub fn from_episode(index: usize, episode: &EpisodeResult, pool: &AgentPool, reward: &RewardConfig) -> Self {
        let mut selections = vec![0u64; pool.len()];
        for step in episode.trajectories.iter().flat_map(|t| &t.steps) {
            selections[step.agent_index] += 1;
        }
        let n = episode.trajectories.len().max(1) as f64;
        let ret = episode
            .trajectories
            .iter()
            .map(|t| trajectory_return(t, reward))
            .sum::<f64>()
            / n;
        Self {
            episode: index,
            reward: episode.terminal_reward,
            ret,
            tokens: episode.total_tokens,
            steps: episode.mean_length(),
            answer_correct: episode.terminal_reward >= 1.0,
            selections,
            topology: topology::fold(episode).ok().map(|g| topology::metrics(&g)),
        }
    }

    /// Non-terminator activations of the agent at `index`, as a share of all
    /// non-terminator activations.
    pub fn share(history: &[EpisodeMetrics], pool: &AgentPool, index: usize) -> f64 {
        let term = pool.terminator_index();
        let mut hit = 0u64;
        let mut all = 0u64;
        for m in history {
            for (k, &c) in m.selections.iter().enumerate() {
                if k != term {
                    all += c;
                    if k == index {
                        hit += c;
                    }
                }
            }
        }
        if all == 0 {
            0.0
        } else {
            hit as f64 / all as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub episodes: usize,
    pub batches: usize,
    pub final_mean_reward: f64,
    pub final_mean_tokens: f64,
    pub final_mean_steps: f64,
    /// Seconds. The only field that varies between identical runs.
    pub wall_time: f64,
}

impl TrainingReport {
    pub fn from_history(history: &[EpisodeMetrics], batches: usize, wall_time: f64) -> Self {
        let tail = &history[history.len().saturating_sub(FINAL_WINDOW)..];
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| {
            if tail.is_empty() {
                0.0
            } else {
                tail.iter().map(f).sum::<f64>() / tail.len() as f64
            }
        };
        Self {
            episodes: history.len(),
            batches,
            final_mean_reward: mean(&|m| m.reward),
            final_mean_tokens: mean(&|m| m.tokens as f64),
            final_mean_steps: mean(&|m| m.steps),
            wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_tokens: f64,
    pub mean_steps: f64,
    pub selection_histogram: BTreeMap<String, u64>,
}

pub fn summarize(history: &[EpisodeMetrics], pool: &AgentPool) -> EvalSummary {
    let n = history.len();
    let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            history.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut selection_histogram = BTreeMap::new();
    for (k, agent) in pool.agents().iter().enumerate() {
        let count = history.iter().map(|m| m.selections.get(k).copied().unwrap_or(0)).sum();
        selection_histogram.insert(agent.id.clone(), count);
    }
    EvalSummary {
        episodes: n,
        mean_reward: mean(&|m| m.reward),
        mean_tokens: mean(&|m| m.tokens as f64),
        mean_steps: mean(&|m| m.steps),
        selection_histogram,
    }
}

/// Row-by-row metrics CSV writer.
pub struct MetricsCsv<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> MetricsCsv<W> {
    pub fn new(out: W, pool: &AgentPool) -> io::Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["episode", "reward", "return", "tokens", "steps", "answer_correct"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(pool.agents().iter().map(|a| format!("sel_{}", a.id)));
        header.extend(
            [
                "density",
                "simple_cycles",
                "cycles_saturated",
                "self_loops",
                "motif",
                "node_count",
                "edge_count",
                "transition_count",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        writer.write_record(&header)?;
        Ok(Self { writer })
    }

    pub fn write(&mut self, m: &EpisodeMetrics) -> io::Result<()> {
        let mut row = vec![
            m.episode.to_string(),
            m.reward.to_string(),
            m.ret.to_string(),
            m.tokens.to_string(),
            m.steps.to_string(),
            m.answer_correct.to_string(),
        ];
        row.extend(m.selections.iter().map(u64::to_string));
        match &m.topology {
            Some(t) => row.extend([
                t.density.to_string(),
                t.simple_cycle_count.to_string(),
                t.cycles_saturated.to_string(),
                t.self_loop_count.to_string(),
                t.motif.as_str().to_string(),
                t.node_count.to_string(),
                t.edge_count.to_string(),
                t.transition_count.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 8)),
        }
        self.writer.write_record(&row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

pub fn write_metrics_csv<W: Write>(out: W, pool: &AgentPool, history: &[EpisodeMetrics]) -> io::Result<()> {
    let mut csv = MetricsCsv::new(out, pool)?;
    for m in history {
        csv.write(m)?;
    }
    csv.flush()
}

/// One line of `trajectories.jsonl`: a full episode, replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLogLine {
    pub episode_id: u64,
    pub episode: EpisodeResult,
}

/// Writes the standard run directory layout:
/// `metrics.csv`, `episodes.jsonl`, `trajectories.jsonl`, `checkpoints/`.
pub struct CsvSink<'a> {
    pool: &'a AgentPool,
    dir: PathBuf,
    metrics: MetricsCsv<BufWriter<File>>,
    episodes: BufWriter<File>,
    trajectories: BufWriter<File>,
}

impl<'a> CsvSink<'a> {
    pub fn create(dir: &Path, pool: &'a AgentPool) -> io::Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        Ok(Self {
            pool,
            dir: dir.to_path_buf(),
            metrics: MetricsCsv::new(open("metrics.csv")?, pool)?,
            episodes: open("episodes.jsonl")?,
            trajectories: open("trajectories.jsonl")?,
        })
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.dir.join("checkpoints").join(name)
    }

    pub fn finish(mut self, params: &PolicyParams) -> io::Result<()> {
        self.write_checkpoint("final.json", params)?;
        self.metrics.flush()?;
        self.episodes.flush()?;
        self.trajectories.flush()
    }

    fn write_checkpoint(&self, name: &str, params: &PolicyParams) -> io::Result<()> {
        params
            .save(self.pool, &self.checkpoint_path(name))
            .map_err(io::Error::other)
    }
}

impl TrainingSink for CsvSink<'_> {
    fn on_episode(&mut self, metrics: &EpisodeMetrics, episode: &EpisodeResult) -> io::Result<()> {
        self.metrics.write(metrics)?;
        let id = metrics.episode as u64;
        write_episode(&mut self.episodes, id, episode)?;
        serde_json::to_writer(
            &mut self.trajectories,
            &TrajectoryLogLine {
                episode_id: id,
                episode: episode.clone(),
            },
        )?;
        self.trajectories.write_all(b"\n")
    }

    fn on_checkpoint(&mut self, batch: usize, params: &PolicyParams) -> io::Result<()> {
        self.write_checkpoint(&format!("batch_{batch:05}.json"), params)
    }
}
