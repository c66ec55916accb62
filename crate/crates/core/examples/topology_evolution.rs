//! Trains on the reasoner/critic loop, then folds early and late episodes
//! into graphs. Writes DOT files to the directory given (default `topology`).
//!
//! cargo run --release --example topology_evolution -- out_dir
//! dot -Tsvg out_dir/late.dot > late.svg

use std::fs;
use std::path::PathBuf;

use puppeteer::env::presets;
use puppeteer::orchestrator::{EpisodeResult, OrchestratorConfig};
use puppeteer::policy::PolicyParams;
use puppeteer::topology::{self, TopologyGraph};
use puppeteer::trainer::{EpisodeMetrics, RewardConfig, Trainer, TrainerConfig, TrainingSink};

/// Keeps the folded graph of every episode.
#[derive(Default)]
struct Graphs(Vec<TopologyGraph>);

impl TrainingSink for Graphs {
    fn on_episode(&mut self, _: &EpisodeMetrics, episode: &EpisodeResult) -> std::io::Result<()> {
        self.0.push(topology::fold(episode).map_err(std::io::Error::other)?);
        Ok(())
    }
}

fn pooled(graphs: &[TopologyGraph]) -> TopologyGraph {
    let mut g = TopologyGraph::new();
    for x in graphs {
        g.merge(x);
    }
    g
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "topology".into()));
    let (pool, env) = presets::critic_loop().build()?;
    let trainer = Trainer::new(
        &pool,
        &env,
        OrchestratorConfig::default(),
        RewardConfig::default(),
        TrainerConfig { episodes: 1500, ..TrainerConfig::default() },
    )?;
    let mut params = PolicyParams::for_pool(&pool);
    let mut graphs = Graphs::default();
    trainer.train(&mut params, &mut graphs)?;

    let cycles: Vec<f64> = graphs.0.iter().map(|g| topology::metrics(g).simple_cycle_count as f64).collect();
    let trend = topology::moving_average(&cycles, topology::DEFAULT_TREND_WINDOW);
    for i in (0..trend.len()).step_by(150) {
        println!("episode {i:>4}: simple cycles (smoothed) {:.2}", trend[i]);
    }

    fs::create_dir_all(&out)?;
    let n = graphs.0.len();
    for (name, slice) in [("early", &graphs.0[..100]), ("late", &graphs.0[n - 100..])] {
        let per_episode: Vec<_> = slice.iter().map(topology::metrics).collect();
        let k = per_episode.len() as f64;
        println!(
            "{name}: mean density {:.3}, mean simple cycles {:.2}, cyclic episodes {}",
            per_episode.iter().map(|m| m.density).sum::<f64>() / k,
            per_episode.iter().map(|m| m.simple_cycle_count as f64).sum::<f64>() / k,
            per_episode.iter().filter(|m| m.motif == topology::Motif::Cyclic).count()
        );
        let g = pooled(slice);
        fs::write(out.join(format!("{name}.dot")), g.to_dot(name))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
