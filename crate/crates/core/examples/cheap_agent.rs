//! Two equally accurate agents, one five times pricier. Under a cost penalty
//! the cheap one should win.
//!
//! cargo run --release --example cheap_agent

use puppeteer::env::presets;
use puppeteer::orchestrator::OrchestratorConfig;
use puppeteer::policy::PolicyParams;
use puppeteer::trainer::{EpisodeMetrics, NullSink, RewardConfig, Trainer, TrainerConfig, FINAL_WINDOW};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pool, env) = presets::cheap_vs_expensive().build()?;
    for agent in pool.agents() {
        println!("{:<8} cost factor {}", agent.id, agent.cost_factor);
    }
    let trainer = Trainer::new(
        &pool,
        &env,
        OrchestratorConfig::default(),
        RewardConfig::default(),
        TrainerConfig::default(),
    )?;
    let mut params = PolicyParams::for_pool(&pool);
    let run = trainer.train(&mut params, &mut NullSink)?;
    let head = &run.history[..FINAL_WINDOW];
    let tail = &run.history[run.history.len() - FINAL_WINDOW..];
    let cheap = pool.index_of("cheap").unwrap();
    println!(
        "cheap share: first {} episodes {:.3}, last {} episodes {:.3}",
        FINAL_WINDOW,
        EpisodeMetrics::share(head, &pool, cheap),
        FINAL_WINDOW,
        EpisodeMetrics::share(tail, &pool, cheap)
    );
    Ok(())
}
