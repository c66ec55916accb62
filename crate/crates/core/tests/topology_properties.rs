mod common;

use common::*;
use proptest::prelude::*;
use puppeteer::env::presets;
use puppeteer::orchestrator::{EpisodeResult, OrchestratorConfig};
use puppeteer::topology::{self, fold, metrics, moving_average, Motif, Node, TopologyError, TopologyGraph};

fn graph(n: usize, edges: &[(usize, usize)]) -> TopologyGraph {
    let mut g = TopologyGraph::new();
    for i in 0..n {
        g.add_agent(&format!("n{i}"));
    }
    for &(a, b) in edges {
        g.add_edge(Node::Agent(format!("n{a}")), Node::Agent(format!("n{b}")));
    }
    g
}

fn edge_set() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..8).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..30)))
}

proptest! {
    #[test]
    fn density_bounds_and_completeness((n, edges) in edge_set()) {
        let m = metrics(&graph(n, &edges));
        prop_assert!((0.0..=1.0).contains(&m.density));
        let distinct: std::collections::BTreeSet<_> = edges.iter().filter(|(a, b)| a != b).collect();
        let complete = n >= 2 && distinct.len() == n * (n - 1);
        prop_assert_eq!(m.density == 1.0, complete);
        let loops: std::collections::BTreeSet<_> = edges.iter().filter(|(a, b)| a == b).collect();
        prop_assert_eq!(m.self_loop_count, loops.len());
        prop_assert_eq!(m.transition_count, edges.len() as u64);
    }

    #[test]
    fn chain_motif_is_sound((n, edges) in edge_set()) {
        let g = graph(n, &edges);
        let m = metrics(&g);
        if m.motif == Motif::Chain {
            prop_assert_eq!(m.simple_cycle_count, 0);
            prop_assert_eq!(m.self_loop_count, 0);
            for a in g.agents() {
                let node = Node::Agent(a.to_string());
                let outs = g.internal_edges().filter(|(x, _, _)| *x == a).count();
                let ins = g.internal_edges().filter(|(_, y, _)| *y == a).count();
                prop_assert!(outs <= 1 && ins <= 1, "{node:?}");
            }
        }
        let cycles = brute_force_cycles(n, &|i, j| i != j && edges.contains(&(i, j)));
        prop_assert_eq!(m.simple_cycle_count, cycles);
        prop_assert_eq!(m.motif == Motif::Cyclic, cycles > 0 || m.self_loop_count > 0);
    }
}

#[test]
fn revisit_folds_into_a_two_cycle() {
    let g = TopologyGraph::from_branches(&[vec!["A", "B", "A"]]);
    let internal: Vec<_> = g.internal_edges().map(|(a, b, _)| (a.to_string(), b.to_string())).collect();
    assert_eq!(internal, vec![("A".into(), "B".into()), ("B".into(), "A".into())]);
    let m = metrics(&g);
    assert_eq!(m.motif, Motif::Cyclic);
    assert_eq!(m.simple_cycle_count, 1);
    assert_eq!(m.node_count, 2);
}

#[test]
fn fold_is_deterministic_and_rejects_empty_input() {
    let scenario = presets::full_roster();
    let (pool, _) = scenario.build().unwrap();
    let params = random_params(&mut rng(8), pool.len(), puppeteer::policy::feature_len(pool.len()), 1.0);
    for ep in rollouts(&scenario, &params, &OrchestratorConfig::default(), 50, 8) {
        assert_eq!(fold(&ep).unwrap(), fold(&ep.clone()).unwrap());
        assert!(fold(&ep).unwrap().node_count() < pool.len());
    }
    assert_eq!(fold(&EpisodeResult::empty()), Err(TopologyError::NoTrajectories));
    let mut ep = rollouts(&scenario, &params, &OrchestratorConfig::default(), 1, 9).remove(0);
    ep.trajectories[1].steps.clear();
    assert_eq!(fold(&ep), Err(TopologyError::EmptyTrajectory(1)));
}

#[test]
fn centered_window_reproduces_a_ramp() {
    let ramp: Vec<f64> = (0..100).map(f64::from).collect();
    let smooth = moving_average(&ramp, 25);
    for i in 12..88 {
        assert!((smooth[i] - ramp[i]).abs() < 1e-9);
    }
    let trend = topology::trend_series(&[(10, 1.0), (20, 3.0)], 2);
    assert_eq!(trend, vec![(10, 2.0), (20, 3.0)]);
}

#[test]
fn dot_export_names_every_edge() {
    let g = TopologyGraph::from_branches(&[vec!["A", "B"], vec!["A"]]);
    let dot = g.to_dot("ep");
    assert!(dot.contains("\"source\" -> \"agent:A\" [label=\"2\", penwidth=2]"));
    assert!(dot.contains("\"agent:B\" -> \"sink\""));
    assert_eq!(g.to_json()["edges"].as_array().unwrap().len(), 4);
}
