//! Four interchangeable agents where three steps are needed. Raising the
//! step-cost weight lambda should shorten trajectories and cut token use.
//!
//! cargo run --release --example cost_sweep

use puppeteer::env::presets;
use puppeteer::orchestrator::OrchestratorConfig;
use puppeteer::policy::PolicyParams;
use puppeteer::trainer::{NullSink, RewardConfig, Trainer, TrainerConfig, FINAL_WINDOW};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pool, env) = presets::efficiency_chain().build()?;
    println!("lambda  steps  tokens  reward");
    for lambda in [0.0, 0.1, 0.25, 0.5] {
        let trainer = Trainer::new(
            &pool,
            &env,
            OrchestratorConfig::default(),
            RewardConfig { lambda, ..RewardConfig::default() },
            TrainerConfig::default(),
        )?;
        let mut params = PolicyParams::for_pool(&pool);
        let run = trainer.train(&mut params, &mut NullSink)?;
        let tail = &run.history[run.history.len() - FINAL_WINDOW..];
        let n = tail.len() as f64;
        println!(
            "{lambda:<6}  {:.2}   {:>6.1}  {:.3}",
            tail.iter().map(|m| m.steps).sum::<f64>() / n,
            tail.iter().map(|m| m.tokens as f64).sum::<f64>() / n,
            tail.iter().map(|m| m.reward).sum::<f64>() / n,
        );
    }
    Ok(())
}
