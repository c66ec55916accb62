//! The full roster: eight reasoning patterns, five tool agents and a
//! terminator. Trains briefly and prints which agents the policy favours.
//!
//! cargo run --release --example full_roster

use puppeteer::env::presets;
use puppeteer::orchestrator::OrchestratorConfig;
use puppeteer::policy::PolicyParams;
use puppeteer::trainer::{summarize, NullSink, RewardConfig, Trainer, TrainerConfig, FINAL_WINDOW};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pool, env) = presets::full_roster().build()?;
    let trainer = Trainer::new(
        &pool,
        &env,
        OrchestratorConfig::default(),
        RewardConfig::default(),
        TrainerConfig { episodes: 1000, ..TrainerConfig::default() },
    )?;
    let mut params = PolicyParams::for_pool(&pool);
    let run = trainer.train(&mut params, &mut NullSink)?;
    let before = summarize(&run.history[..FINAL_WINDOW], &pool);
    let after = summarize(&run.history[run.history.len() - FINAL_WINDOW..], &pool);
    println!("reward {:.3} -> {:.3}, tokens {:.0} -> {:.0}", before.mean_reward, after.mean_reward, before.mean_tokens, after.mean_tokens);
    let mut top: Vec<_> = after.selection_histogram.iter().collect();
    top.sort_by(|a, b| b.1.cmp(a.1));
    for (id, count) in top.iter().take(5) {
        println!("{id:<16} {count}");
    }
    Ok(())
}
