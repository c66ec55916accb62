//! The `puppeteer` command line: train, eval, analyze, replay.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::orchestrator::episode_log::read_log;
use crate::orchestrator::{Orchestrator, ReplayError};
use crate::policy::{PolicyError, PolicyParams};
use crate::topology::{self, TopologyGraph, DEFAULT_TREND_WINDOW};
use crate::trainer::{summarize, CsvSink, EvalSummary, Trainer, TrainerError, TrainingReport, TrajectoryLogLine};

#[derive(Debug, Parser)]
#[command(name = "puppeteer", version, about = "Train and inspect a learned multi-agent orchestrator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write logs, metrics and checkpoints.
    Train(RunArgs),
    /// Run episodes with frozen parameters.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to evaluate; omit for freshly initialized weights.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Fold an episode log into graphs and write topology metrics.
    Analyze {
        /// `episodes.jsonl` from a training run.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
        /// Moving-average window for trend columns.
        #[arg(long, default_value_t = DEFAULT_TREND_WINDOW)]
        window: usize,
        /// Episode ids to export as DOT and JSON graphs.
        #[arg(long, value_delimiter = ',')]
        episodes: Vec<u64>,
    },
    /// Re-execute logged episodes and check them step by step.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// `trajectories.jsonl` from a training run.
        #[arg(long)]
        log: PathBuf,
        /// Only replay this episode.
        #[arg(long)]
        episode: Option<u64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        init_logging(&config.log_level);
        config.apply(&Overrides {
            output_dir: self.out.clone(),
            seed: self.seed,
            episodes: self.episodes,
        });
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("checkpoint does not match the pool: {0}")]
    CheckpointMismatch(PolicyError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::CheckpointMismatch(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<TrainerError> for CliError {
    fn from(e: TrainerError) -> Self {
        runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime(e)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(runtime)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Trains from a config and writes the run directory.
pub fn cmd_train(args: &RunArgs) -> Result<TrainingReport, CliError> {
    let config = args.load()?;
    let (pool, env) = config.build()?;
    fs::create_dir_all(&config.output_dir)?;
    write_json(&config.output_dir.join("config.json"), &config)?;
    let trainer = Trainer::new(
        &pool,
        env.as_ref(),
        config.orchestrator.clone(),
        config.reward.clone(),
        config.trainer.clone(),
    )?;
    let mut params = PolicyParams::for_pool(&pool);
    let mut sink = CsvSink::create(&config.output_dir, &pool)?;
    let run = trainer.train(&mut params, &mut sink)?;
    sink.finish(&params)?;
    write_json(&config.output_dir.join("report.json"), &run.report)?;
    Ok(run.report)
}

/// Evaluates a checkpoint (or fresh weights) for `--episodes` episodes.
pub fn cmd_eval(args: &RunArgs, checkpoint: Option<&Path>) -> Result<EvalSummary, CliError> {
    let config = args.load()?;
    let (pool, env) = config.build()?;
    let params = match checkpoint {
        Some(path) => PolicyParams::load(path, &pool).map_err(|e| match e {
            PolicyError::FingerprintMismatch { .. } | PolicyError::DimensionMismatch { .. } => {
                CliError::CheckpointMismatch(e)
            }
            other => runtime(other),
        })?,
        None => PolicyParams::for_pool(&pool),
    };
    let trainer = Trainer::new(
        &pool,
        env.as_ref(),
        config.orchestrator.clone(),
        config.reward.clone(),
        config.trainer.clone(),
    )?;
    let history = trainer.evaluate(&params, config.trainer.episodes)?;
    let summary = summarize(&history, &pool);
    fs::create_dir_all(&config.output_dir)?;
    write_json(&config.output_dir.join("eval.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub episodes: usize,
    pub warnings: usize,
    pub mean_density: f64,
    pub mean_simple_cycles: f64,
    /// Metrics of all episodes folded into one graph.
    pub pooled_density: f64,
    pub pooled_simple_cycles: usize,
}

/// Writes `topology.csv`, `analysis.json` and the requested DOT/JSON graphs.
pub fn cmd_analyze(log: &Path, out: &Path, window: usize, dot_episodes: &[u64]) -> Result<AnalyzeSummary, CliError> {
    let reader = BufReader::new(File::open(log).map_err(|e| runtime(format!("{}: {e}", log.display())))?);
    let parsed = read_log(reader)?;
    fs::create_dir_all(out)?;
    let mut pooled = TopologyGraph::new();
    let mut rows = Vec::with_capacity(parsed.episodes.len());
    for ep in &parsed.episodes {
        let graph = TopologyGraph::from_branches(&ep.activations());
        pooled.merge(&graph);
        if dot_episodes.contains(&ep.episode_id) {
            fs::write(out.join(format!("episode_{}.dot", ep.episode_id)), graph.to_dot(&format!("episode {}", ep.episode_id)))?;
            write_json(&out.join(format!("episode_{}.json", ep.episode_id)), &graph.to_json())?;
        }
        rows.push((ep, topology::metrics(&graph)));
    }
    let density: Vec<f64> = rows.iter().map(|(_, m)| m.density).collect();
    let cycles: Vec<f64> = rows.iter().map(|(_, m)| m.simple_cycle_count as f64).collect();
    let density_trend = topology::moving_average(&density, window);
    let cycles_trend = topology::moving_average(&cycles, window);

    let mut csv = csv::Writer::from_path(out.join("topology.csv")).map_err(runtime)?;
    csv.write_record([
        "episode",
        "branches",
        "reward",
        "density",
        "simple_cycles",
        "cycles_saturated",
        "self_loops",
        "motif",
        "node_count",
        "edge_count",
        "transition_count",
        "density_trend",
        "cycles_trend",
    ])
    .map_err(runtime)?;
    for (i, (ep, m)) in rows.iter().enumerate() {
        csv.write_record([
            ep.episode_id.to_string(),
            ep.branches.len().to_string(),
            ep.terminal.as_ref().map(|t| t.reward.to_string()).unwrap_or_default(),
            m.density.to_string(),
            m.simple_cycle_count.to_string(),
            m.cycles_saturated.to_string(),
            m.self_loop_count.to_string(),
            m.motif.as_str().to_string(),
            m.node_count.to_string(),
            m.edge_count.to_string(),
            m.transition_count.to_string(),
            density_trend[i].to_string(),
            cycles_trend[i].to_string(),
        ])
        .map_err(runtime)?;
    }
    csv.flush()?;

    let n = rows.len();
    let mean = |xs: &[f64]| if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
    let pooled_metrics = topology::metrics(&pooled);
    let summary = AnalyzeSummary {
        episodes: n,
        warnings: parsed.warnings,
        mean_density: mean(&density),
        mean_simple_cycles: mean(&cycles),
        pooled_density: pooled_metrics.density,
        pooled_simple_cycles: pooled_metrics.simple_cycle_count,
    };
    if summary.warnings > 0 {
        log::warn!("{} corrupt log lines skipped", summary.warnings);
    }
    write_json(&out.join("analysis.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub episodes: usize,
    pub steps: usize,
}

/// Replays `trajectories.jsonl` against the config's simulated env.
pub fn cmd_replay(config: &Path, log: &Path, episode: Option<u64>) -> Result<ReplaySummary, CliError> {
    let config = RunConfig::load(config)?;
    init_logging(&config.log_level);
    let (pool, env) = config.build()?;
    let orch = Orchestrator::new(&pool, &config.orchestrator, env.backend()).map_err(runtime)?;
    let reader = BufReader::new(File::open(log).map_err(|e| runtime(format!("{}: {e}", log.display())))?);
    let mut summary = ReplaySummary { episodes: 0, steps: 0 };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryLogLine =
            serde_json::from_str(&line).map_err(|e| runtime(format!("line {}: {e}", lineno + 1)))?;
        if episode.is_some_and(|id| id != record.episode_id) {
            continue;
        }
        let replayed = orch
            .replay(&record.episode.trajectories, env.scorer())
            .map_err(|e: ReplayError| runtime(format!("episode {}: {e}", record.episode_id)))?;
        if replayed.final_answer != record.episode.final_answer {
            return Err(runtime(format!("episode {}: aggregated answer differs", record.episode_id)));
        }
        summary.episodes += 1;
        summary.steps += record.episode.trajectories.iter().map(|t| t.len()).sum::<usize>();
    }
    if let Some(id) = episode {
        if summary.episodes == 0 {
            return Err(runtime(format!("episode {id} not found in {}", log.display())));
        }
    }
    Ok(summary)
}

/// Starts logging at `level` unless `RUST_LOG` says otherwise. Idempotent.
pub fn init_logging(level: &str) {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Command::Analyze { .. } = cli.command {
        init_logging("info");
    }
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args).map(|r| print_json(&r)),
        Command::Eval { run, checkpoint } => cmd_eval(run, checkpoint.as_deref()).map(|s| print_json(&s)),
        Command::Analyze {
            log,
            out,
            window,
            episodes,
        } => cmd_analyze(log, out, *window, episodes).map(|s| print_json(&s)),
        Command::Replay { config, log, episode } => cmd_replay(config, log, *episode).map(|s| print_json(&s)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
