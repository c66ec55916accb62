//! Logs a few episodes, then re-executes them from the log and checks every
//! step matches.
//!
//! cargo run --example replay_audit

use std::io::{BufRead, BufReader, Cursor};

use puppeteer::env::presets;
use puppeteer::orchestrator::episode_log::{read_log, write_episode};
use puppeteer::orchestrator::{EpisodeResult, Orchestrator, OrchestratorConfig};
use puppeteer::policy::PolicyParams;
use puppeteer::scoring::TaskScorer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pool, env) = presets::full_roster().build()?;
    let config = OrchestratorConfig::default();
    let orch = Orchestrator::new(&pool, &config, &env)?;
    let policy = PolicyParams::for_pool(&pool);

    let mut log = Vec::new();
    let mut full = Vec::new();
    for id in 0..5u64 {
        let ep = orch.run_episode(&env.spec().task(id as usize), &policy, &TaskScorer, id)?;
        write_episode(&mut log, id, &ep)?;
        full.push(serde_json::to_string(&ep)?);
    }
    let parsed = read_log(BufReader::new(Cursor::new(&log)))?;
    println!("{} log lines, {} episodes, {} warnings", Cursor::new(&log).lines().count(), parsed.episodes.len(), parsed.warnings);

    for (line, logged) in full.iter().zip(&parsed.episodes) {
        let ep: EpisodeResult = serde_json::from_str(line)?;
        let replayed = orch.replay(&ep.trajectories, &TaskScorer)?;
        assert_eq!(replayed.final_answer, ep.final_answer);
        println!("episode {}: {:?} replayed, answer {:?}", logged.episode_id, logged.activations(), replayed.final_answer);
    }
    Ok(())
}
