//! JSONL episode log: one object per step, one terminal object per episode.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EpisodeResult;
use crate::digest::StateDigest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLogRecord {
    pub episode_id: u64,
    pub branch: usize,
    pub t: usize,
    pub agent_id: String,
    pub log_prob: f64,
    pub tokens: u64,
    pub digest_before: StateDigest,
    pub digest_after: StateDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRecord {
    pub episode_id: u64,
    pub reward: f64,
    pub total_tokens: u64,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Step(StepLogRecord),
    Episode(EpisodeLogRecord),
}

pub fn episode_records(episode_id: u64, episode: &EpisodeResult) -> Vec<LogRecord> {
    let mut records = Vec::new();
    for traj in &episode.trajectories {
        for step in &traj.steps {
            records.push(LogRecord::Step(StepLogRecord {
                episode_id,
                branch: traj.branch,
                t: step.t,
                agent_id: step.agent_id.clone(),
                log_prob: step.log_prob,
                tokens: step.tokens,
                digest_before: step.digest_before,
                digest_after: step.digest_after,
            }));
        }
    }
    records.push(LogRecord::Episode(EpisodeLogRecord {
        episode_id,
        reward: episode.terminal_reward,
        total_tokens: episode.total_tokens,
        answer: episode.final_answer.clone(),
    }));
    records
}

pub fn write_episode<W: Write>(out: &mut W, episode_id: u64, episode: &EpisodeResult) -> io::Result<()> {
    for record in episode_records(episode_id, episode) {
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// An episode reassembled from log lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoggedEpisode {
    pub episode_id: u64,
    /// Branch -> agent ids ordered by step index, terminator included.
    pub branches: BTreeMap<usize, Vec<String>>,
    pub terminal: Option<EpisodeLogRecord>,
}

impl LoggedEpisode {
    /// Branch activation sequences with each branch's final (terminator) step removed.
    pub fn activations(&self) -> Vec<Vec<String>> {
        self.branches
            .values()
            .map(|seq| seq[..seq.len().saturating_sub(1)].to_vec())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub episodes: Vec<LoggedEpisode>,
    /// Lines that could not be parsed and were skipped.
    pub warnings: usize,
}

/// Parses a JSONL episode log. Corrupt lines are skipped and counted.
pub fn read_log<R: BufRead>(reader: R) -> io::Result<ParsedLog> {
    let mut steps: BTreeMap<u64, BTreeMap<usize, BTreeMap<usize, String>>> = BTreeMap::new();
    let mut terminals: BTreeMap<u64, EpisodeLogRecord> = BTreeMap::new();
    let mut warnings = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogRecord>(&line) {
            Ok(LogRecord::Step(s)) => {
                steps
                    .entry(s.episode_id)
                    .or_default()
                    .entry(s.branch)
                    .or_default()
                    .insert(s.t, s.agent_id);
            }
            Ok(LogRecord::Episode(e)) => {
                terminals.insert(e.episode_id, e);
            }
            Err(err) => {
                log::warn!("skipping corrupt log line {}: {err}", lineno + 1);
                warnings += 1;
            }
        }
    }
    let mut ids: Vec<u64> = steps.keys().chain(terminals.keys()).copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let episodes = ids
        .into_iter()
        .map(|id| LoggedEpisode {
            episode_id: id,
            branches: steps
                .remove(&id)
                .unwrap_or_default()
                .into_iter()
                .map(|(b, seq)| (b, seq.into_values().collect()))
                .collect(),
            terminal: terminals.remove(&id),
        })
        .collect();
    Ok(ParsedLog { episodes, warnings })
}
