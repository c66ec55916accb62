//! Three agents, one of which is right 90% of the time. The policy should
//! learn to call it.
//!
//! cargo run --release --example train_bandit -- [seed]

use puppeteer::env::presets;
use puppeteer::orchestrator::OrchestratorConfig;
use puppeteer::policy::PolicyParams;
use puppeteer::trainer::{EpisodeMetrics, NullSink, RewardConfig, Trainer, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let (pool, env) = presets::bandit().build()?;
    let trainer = Trainer::new(
        &pool,
        &env,
        OrchestratorConfig::default(),
        RewardConfig::default(),
        TrainerConfig { seed, ..TrainerConfig::default() },
    )?;
    let mut params = PolicyParams::for_pool(&pool);
    let run = trainer.train(&mut params, &mut NullSink)?;

    let a = pool.index_of("A").unwrap();
    println!("episodes   share(A)  reward");
    for chunk in run.history.chunks(100) {
        let reward = chunk.iter().map(|m| m.reward).sum::<f64>() / chunk.len() as f64;
        println!(
            "{:>4}-{:<4}  {:.3}     {:.3}",
            chunk[0].episode,
            chunk[chunk.len() - 1].episode,
            EpisodeMetrics::share(chunk, &pool, a),
            reward
        );
    }
    println!("batches: {}", run.report.batches);
    Ok(())
}
