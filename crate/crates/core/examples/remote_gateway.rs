//! Runs episodes against a chat-completions endpoint. Without arguments a
//! local mock server answers; pass a base URL and set `PUPPETEER_API_KEY`
//! to hit a real one.
//!
//! cargo run --example remote_gateway
//! PUPPETEER_API_KEY=... cargo run --example remote_gateway -- https://api.example.com

use puppeteer::agent::{AgentSpec, PoolConfig, ReasoningPattern};
use puppeteer::gateway::mock::{MockChatServer, MockResponse};
use puppeteer::gateway::{GatewayClient, GatewayConfig, RemoteBackend};
use puppeteer::orchestrator::{Orchestrator, OrchestratorConfig};
use puppeteer::policy::PolicyParams;
use puppeteer::scoring::TaskScorer;
use puppeteer::task::TaskSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut mock = None;
    let client = match std::env::args().nth(1) {
        Some(endpoint) => GatewayClient::from_env(GatewayConfig { endpoint, ..GatewayConfig::default() })?,
        None => {
            let script = (0..12).map(|i| MockResponse::completion(&format!("Step {i}: 2 + 2 = 4.\nFINAL ANSWER: 4"), 40, 12)).collect();
            let server = MockChatServer::start(script)?;
            let config = GatewayConfig { endpoint: server.endpoint(), ..GatewayConfig::default() };
            mock = Some(server);
            GatewayClient::new(config, "mock-key")?
        }
    };

    let pool = puppeteer::agent::build_pool(&PoolConfig {
        agents: vec![
            AgentSpec::new("planner", "gpt-4o-mini", ReasoningPattern::Planning),
            AgentSpec::new("critic", "gpt-4o-mini", ReasoningPattern::Critique),
        ],
        terminator: None,
    })?;
    let config = OrchestratorConfig { width: 2, max_depth: 3, ..OrchestratorConfig::default() };
    let backend = RemoteBackend::new(client);
    let orch = Orchestrator::new(&pool, &config, &backend)?;
    let task = TaskSpec::closed("q1", "What is 2 + 2?", "4");
    let ep = orch.run_episode(&task, &PolicyParams::for_pool(&pool), &TaskScorer, 7)?;

    for t in &ep.trajectories {
        let ids: Vec<&str> = t.steps.iter().map(|s| s.agent_id.as_str()).collect();
        println!("branch {}: {}", t.branch, ids.join(" -> "));
    }
    println!("answer {:?}, reward {}", ep.final_answer, ep.terminal_reward);
    if let Some(server) = mock {
        println!("requests sent: {}", server.requests().len());
    }
    Ok(())
}
