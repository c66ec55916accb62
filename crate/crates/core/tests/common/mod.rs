//! Test-only oracles. Nothing here calls into the code under test for the
//! quantity being checked.

#![allow(dead_code)]

use ndarray::Array2;
use puppeteer::agent::AgentPool;
use puppeteer::env::Scenario;
use puppeteer::orchestrator::{EpisodeResult, Orchestrator, OrchestratorConfig};
use puppeteer::policy::{feature_len, ActionPolicy, FeatureVector, PolicyError, PolicyParams};
use puppeteer::scoring::TaskScorer;
use puppeteer::trainer::{EpisodeMetrics, RewardConfig, Trainer, TrainerConfig, NullSink, FINAL_WINDOW};
use puppeteer::trajectory::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_params<R: Rng>(rng: &mut R, pool_size: usize, features: usize, scale: f64) -> PolicyParams {
    let w = Array2::from_shape_fn((pool_size, features), |_| scale * normal(rng));
    PolicyParams::new(w, 1.0).unwrap()
}

/// Norm-wise relative error; zero when both sides vanish.
pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Log-probability straight from the softmax definition.
pub fn naive_log_prob(weights: &Array2<f64>, temperature: f64, x: &[f64], mask: &[bool], action: usize) -> f64 {
    let logits: Vec<f64> = weights
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() / temperature)
        .collect();
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().zip(mask).filter(|(_, m)| **m).map(|(l, _)| (l - max).exp()).sum();
    logits[action] - max - z.ln()
}

/// Central finite differences of `log p(action)` in every weight.
pub fn fd_log_prob_grad(params: &PolicyParams, x: &FeatureVector, mask: &[bool], action: usize, h: f64) -> Array2<f64> {
    let mut w = params.weights.clone();
    let mut grad = Array2::zeros(w.raw_dim());
    for k in 0..w.nrows() {
        for j in 0..w.ncols() {
            let orig = w[[k, j]];
            w[[k, j]] = orig + h;
            let up = naive_log_prob(&w, params.temperature, x.as_slice(), mask, action);
            w[[k, j]] = orig - h;
            let down = naive_log_prob(&w, params.temperature, x.as_slice(), mask, action);
            w[[k, j]] = orig;
            grad[[k, j]] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// `R_t = gamma^(T-t) r - lambda * sum_{k=t..T} gamma^(k-t) C_k`, written out
/// without the recursion. `costs[i]` is the cost factor of step `i`.
pub fn returns_closed_form(r: f64, lambda: f64, gamma: f64, phi: f64, costs: &[f64]) -> Vec<f64> {
    let big_t = costs.len();
    let c = |k: usize| if k == 0 { 0.0 } else { costs[k - 1] * (1.0 + k as f64 / phi).ln() };
    (0..=big_t)
        .map(|t| {
            let mut acc = gamma.powi((big_t - t) as i32) * r;
            for k in t..=big_t {
                acc -= lambda * gamma.powi((k - t) as i32) * c(k);
            }
            acc
        })
        .collect()
}

/// `(1/N) sum_n (sum_t log pi(a_t)) (R_n - b)` with log-probs recomputed
/// from cached features under `weights`.
pub fn surrogate(batch: &[Trajectory], weights: &Array2<f64>, temperature: f64, returns: &[f64], b: f64) -> f64 {
    let mut total = 0.0;
    for (traj, ret) in batch.iter().zip(returns) {
        let mut lp = 0.0;
        for step in traj.steps.iter().filter(|s| !s.forced) {
            let x = step.features.as_ref().unwrap();
            lp += naive_log_prob(weights, temperature, x.as_slice(), &step.mask, step.agent_index);
        }
        total += lp * (ret - b);
    }
    total / batch.len() as f64
}

pub fn fd_surrogate(batch: &[Trajectory], params: &PolicyParams, returns: &[f64], b: f64, h: f64) -> Array2<f64> {
    let mut w = params.weights.clone();
    let mut grad = Array2::zeros(w.raw_dim());
    for k in 0..w.nrows() {
        for j in 0..w.ncols() {
            let orig = w[[k, j]];
            w[[k, j]] = orig + h;
            let up = surrogate(batch, &w, params.temperature, returns, b);
            w[[k, j]] = orig - h;
            let down = surrogate(batch, &w, params.temperature, returns, b);
            w[[k, j]] = orig;
            grad[[k, j]] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// Counts simple directed cycles of length >= 2 by trying every vertex
/// sequence that starts at its smallest vertex.
pub fn brute_force_cycles(n: usize, edge: &dyn Fn(usize, usize) -> bool) -> usize {
    fn extend(path: &mut Vec<usize>, used: &mut [bool], n: usize, edge: &dyn Fn(usize, usize) -> bool) -> usize {
        let start = path[0];
        let last = *path.last().unwrap();
        let mut count = 0;
        if path.len() >= 2 && edge(last, start) {
            count += 1;
        }
        for v in start + 1..n {
            if !used[v] && edge(last, v) {
                used[v] = true;
                path.push(v);
                count += extend(path, used, n, edge);
                path.pop();
                used[v] = false;
            }
        }
        count
    }
    let mut total = 0;
    for s in 0..n {
        let mut used = vec![false; n];
        used[s] = true;
        total += extend(&mut vec![s], &mut used, n, edge);
    }
    total
}

/// Plays a fixed agent sequence, then the terminator.
pub struct ScriptedPolicy {
    pub script: Vec<usize>,
    pub terminator: usize,
    pub max_depth: usize,
}

impl ActionPolicy for ScriptedPolicy {
    fn action_distribution(&self, features: &FeatureVector, mask: &[bool]) -> Result<Vec<f64>, PolicyError> {
        // feature 1 is t / max_depth
        let t = (features.as_slice()[1] * self.max_depth as f64).round() as usize;
        let want = self.script.get(t).copied().unwrap_or(self.terminator);
        let pick = if mask[want] { want } else { mask.iter().position(|m| *m).unwrap() };
        let mut p = vec![0.0; mask.len()];
        p[pick] = 1.0;
        Ok(p)
    }

    fn fingerprint(&self) -> u64 {
        0x5c41
    }
}

pub fn scripted(pool: &AgentPool, ids: &[&str], max_depth: usize) -> ScriptedPolicy {
    ScriptedPolicy {
        script: ids.iter().map(|id| pool.index_of(id).unwrap()).collect(),
        terminator: pool.terminator_index(),
        max_depth,
    }
}

/// Runs `count` episodes of `scenario` under `policy` with default settings.
pub fn rollouts(scenario: &Scenario, policy: &dyn ActionPolicy, config: &OrchestratorConfig, count: usize, seed: u64) -> Vec<EpisodeResult> {
    let (pool, env) = scenario.build().unwrap();
    let orch = Orchestrator::new(&pool, config, &env).unwrap();
    (0..count)
        .map(|i| {
            let task = env.spec().task(i % env.spec().task_count);
            orch.run_episode(&task, policy, &TaskScorer, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))
                .unwrap()
        })
        .collect()
}

/// Trains a fresh zero-initialized policy; returns the pool, history and weights.
pub fn train_scenario(
    scenario: &Scenario,
    orchestrator: OrchestratorConfig,
    reward: RewardConfig,
    trainer: TrainerConfig,
) -> (AgentPool, Vec<EpisodeMetrics>, PolicyParams) {
    let (pool, env) = scenario.build().unwrap();
    let t = Trainer::new(&pool, &env, orchestrator, reward, trainer).unwrap();
    let mut params = PolicyParams::zeros(pool.len(), feature_len(pool.len()));
    let run = t.train(&mut params, &mut NullSink).unwrap();
    (pool, run.history, params)
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn first_window(h: &[EpisodeMetrics]) -> &[EpisodeMetrics] {
    &h[..FINAL_WINDOW.min(h.len())]
}

pub fn last_window(h: &[EpisodeMetrics]) -> &[EpisodeMetrics] {
    &h[h.len().saturating_sub(FINAL_WINDOW)..]
}
