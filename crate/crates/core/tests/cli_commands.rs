use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use puppeteer::cli::{cmd_analyze, cmd_eval, cmd_replay, cmd_train, RunArgs};
use puppeteer::config::RunConfig;
use puppeteer::env::{presets, Scenario};
use puppeteer::orchestrator::episode_log::write_episode;
use puppeteer::orchestrator::{Orchestrator, OrchestratorConfig};
use puppeteer::scoring::TaskScorer;
use serde_json::{json, Value};
use tempfile::TempDir;

mod common;
use common::scripted;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_puppeteer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, scenario: &Scenario, tweak: impl FnOnce(&mut Value)) -> PathBuf {
    let mut config = RunConfig::simulated(scenario.pool.clone(), scenario.env.clone());
    config.output_dir = dir.join(format!("run-{name}"));
    config.log_level = "warn".into();
    let mut v = serde_json::to_value(&config).unwrap();
    tweak(&mut v);
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn args(config: &Path, out: Option<&Path>, episodes: Option<usize>) -> RunArgs {
    RunArgs {
        config: config.to_path_buf(),
        out: out.map(Path::to_path_buf),
        seed: None,
        episodes,
    }
}

#[test]
fn train_writes_a_complete_run_directory() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "bandit", &presets::bandit(), |_| {});
    let out = dir.path().join("nested/does/not/exist");
    let o = bin(&["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["episodes"], 500);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 501);
    for file in ["episodes.jsonl", "trajectories.jsonl", "config.json", "report.json", "checkpoints/final.json"] {
        assert!(out.join(file).is_file(), "{file}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let both = write_config(dir.path(), "both", &presets::bandit(), |v| {
        v["remote"] = json!({"gateway": {"endpoint": "http://127.0.0.1:9"}, "tasks": []});
    });
    let o = bin(&["train", "--config", both.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let typo = write_config(dir.path(), "typo", &presets::bandit(), |v| {
        v["trainer"]["learning_rte"] = json!(0.1);
    });
    let o = bin(&["train", "--config", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("trainer") && err.contains("learning_rte"), "{err}");

    let keyed = write_config(dir.path(), "keyed", &presets::bandit(), |v| {
        v.as_object_mut().unwrap().remove("env");
        v["remote"] = json!({"gateway": {"endpoint": "http://127.0.0.1:9", "api_key": "sk-x"}, "tasks": []});
    });
    assert_eq!(bin(&["eval", "--config", keyed.to_str().unwrap()]).status.code(), Some(2));

    let missing = dir.path().join("absent.json");
    assert_eq!(bin(&["train", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn fresh_weights_evaluate_to_the_uniform_expectation() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "bandit", &presets::bandit(), |_| {});
    let n = 2000;
    let summary = cmd_eval(&args(&config, None, Some(n)), None).unwrap();
    // Terminator masked on the first step, so every branch ends on a uniform pick of A, B, C.
    let p: f64 = (0.9 + 0.1 + 0.1) / 3.0;
    let majority = p * p * (3.0 - 2.0 * p);
    let sigma = (majority * (1.0 - majority) / n as f64).sqrt();
    assert!((summary.mean_reward - majority).abs() <= 3.0 * sigma, "{} vs {majority}", summary.mean_reward);
    assert!(dir.path().join("run-bandit/eval.json").is_file());

    let empty = cmd_eval(&args(&config, None, Some(0)), None).unwrap();
    assert_eq!(empty.episodes, 0);
    assert_eq!(empty.mean_reward, 0.0);
}

#[test]
fn trained_checkpoint_beats_initialization_and_rejects_other_pools() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "bandit", &presets::bandit(), |_| {});
    let run = dir.path().join("trained");
    cmd_train(&args(&config, Some(&run), None)).unwrap();
    let ckpt = run.join("checkpoints/final.json");
    let fresh = cmd_eval(&args(&config, None, Some(300)), None).unwrap();
    let trained = cmd_eval(&args(&config, None, Some(300)), Some(&ckpt)).unwrap();
    assert!(trained.mean_reward >= fresh.mean_reward, "{} < {}", trained.mean_reward, fresh.mean_reward);

    let other = write_config(dir.path(), "chain", &presets::efficiency_chain(), |_| {});
    let o = bin(&["eval", "--config", other.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "cheap", &presets::cheap_vs_expensive(), |_| {});
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_train(&args(&config, Some(&a), Some(120))).unwrap();
    cmd_train(&args(&config, Some(&b), Some(120))).unwrap();
    for file in ["metrics.csv", "episodes.jsonl", "trajectories.jsonl", "checkpoints/final.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

fn scripted_log(dir: &Path, scenario: &Scenario, script: &[&str]) -> PathBuf {
    let (pool, env) = scenario.build().unwrap();
    let config = OrchestratorConfig::default();
    let orch = Orchestrator::new(&pool, &config, &env).unwrap();
    let policy = scripted(&pool, script, config.max_depth);
    let path = dir.join("episodes.jsonl");
    let mut out = fs::File::create(&path).unwrap();
    for id in 0..3 {
        let ep = orch.run_episode(&env.spec().task(id as usize), &policy, &TaskScorer, id).unwrap();
        write_episode(&mut out, id, &ep).unwrap();
    }
    path
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn analyze_classifies_scripted_topologies() {
    let dir = TempDir::new().unwrap();
    let chain = scripted_log(dir.path(), &presets::efficiency_chain(), &["B", "C", "D"]);
    let out = dir.path().join("chain-analysis");
    let s = cmd_analyze(&chain, &out, 25, &[1]).unwrap();
    assert_eq!(s.episodes, 3);
    assert!(csv_column(&out.join("topology.csv"), "motif").iter().all(|m| m == "chain"));
    assert!(out.join("episode_1.dot").is_file() && out.join("episode_1.json").is_file());
    assert!(!out.join("episode_0.dot").exists());

    let loopy_dir = dir.path().join("loopy");
    fs::create_dir_all(&loopy_dir).unwrap();
    let loopy = scripted_log(&loopy_dir, &presets::bandit(), &["A", "B", "A"]);
    let out = dir.path().join("loop-analysis");
    cmd_analyze(&loopy, &out, 25, &[]).unwrap();
    for c in csv_column(&out.join("topology.csv"), "simple_cycles") {
        assert!(c.parse::<usize>().unwrap() >= 1);
    }
}

#[test]
fn analyze_and_replay_a_training_log() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "critic", &presets::critic_loop(), |_| {});
    let run = dir.path().join("run");
    cmd_train(&args(&config, Some(&run), Some(1000))).unwrap();

    let log = run.join("episodes.jsonl");
    let mut text = fs::read_to_string(&log).unwrap();
    text.push_str("{\"truncated\": \n");
    fs::write(&log, text).unwrap();
    let out = dir.path().join("analysis");
    let o = bin(&["analyze", "--log", log.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["episodes"], 1000);
    assert_eq!(s["warnings"], 1);
    let table = out.join("topology.csv");
    assert_eq!(csv_column(&table, "density_trend").len(), 1000);
    assert_eq!(csv_column(&table, "cycles_trend").len(), 1000);

    let replay = cmd_replay(&config, &run.join("trajectories.jsonl"), None).unwrap();
    assert_eq!(replay.episodes, 1000);
    assert!(replay.steps >= 3000);
    let one = bin(&[
        "replay",
        "--config",
        config.to_str().unwrap(),
        "--log",
        run.join("trajectories.jsonl").to_str().unwrap(),
        "--episode",
        "17",
    ]);
    assert_eq!(one.status.code(), Some(0));
    let missing = cmd_replay(&config, &run.join("trajectories.jsonl"), Some(5000)).unwrap_err();
    assert_eq!(missing.exit_code(), 1);
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let config = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let text = serde_json::to_string(&config).unwrap();
            assert_eq!(RunConfig::parse(&text, "round-trip").unwrap(), config);
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
