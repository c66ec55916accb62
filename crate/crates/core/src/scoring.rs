//! Terminal reward: exact match for closed tasks, token F1 for open ones.

use std::collections::HashMap;

use crate::orchestrator::normalize_answer;
use crate::task::{Domain, TaskSpec};

/// Maps an aggregated answer to a terminal reward in `[0, 1]`.
pub trait Scorer: Sync {
    fn score(&self, answer: &str, task: &TaskSpec) -> f64;
}

/// Exact match on closed tasks and token-overlap F1 on open ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct TaskScorer;

impl Scorer for TaskScorer {
    fn score(&self, answer: &str, task: &TaskSpec) -> f64 {
        let Some(truth) = task.ground_truth.as_deref() else {
            return 0.0;
        };
        let raw = match task.domain {
            Domain::Closed => exact_match(answer, truth),
            Domain::Open => token_f1(answer, truth),
        };
        raw.clamp(0.0, 1.0)
    }
}

pub fn exact_match(answer: &str, truth: &str) -> f64 {
    if normalize_answer(answer) == normalize_answer(truth) {
        1.0
    } else {
        0.0
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Multiset token F1 between an answer and a reference.
pub fn token_f1(answer: &str, reference: &str) -> f64 {
    let predicted = tokens(answer);
    let gold = tokens(reference);
    if predicted.is_empty() || gold.is_empty() {
        return if predicted.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *gold_counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &predicted {
        if let Some(c) = gold_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / predicted.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_scoring() {
        let task = TaskSpec::closed("t", "q", "42");
        assert_eq!(TaskScorer.score("42", &task), 1.0);
        assert_eq!(TaskScorer.score(" 42. ", &task), 1.0);
        assert_eq!(TaskScorer.score("", &task), 0.0);
        assert_eq!(TaskScorer.score("41", &task), 0.0);
    }

    #[test]
    fn open_scoring_partial() {
        let task = TaskSpec::open("t", "q", Some("red green blue yellow".into()));
        let s = TaskScorer.score("red green purple orange", &task);
        assert!((s - 0.5).abs() < 1e-12);
        assert_eq!(TaskScorer.score("red green blue yellow", &task), 1.0);
    }
}
