//! The orchestration policy: a linear softmax over pool agents.
//!
//! Each agent `k` owns a weight row `w_k`; given state features `x` the
//! policy selects agent `k` with probability proportional to
//! `exp(w_k . x / temperature)` among unmasked agents. The score function
//! `d log p(a) / d w` is available in closed form, which is all REINFORCE
//! needs.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentPool;
use crate::digest::fnv1a;
use crate::orchestrator::SystemState;
use crate::task::Domain;

/// Number of signed hash buckets for task text.
pub const HASH_BUCKETS: usize = 16;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("every action is masked")]
    AllMasked,
    #[error("action {0} is masked or out of range")]
    MaskedAction(usize),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("parameters contain non-finite values")]
    NonFinite,
    #[error("checkpoint was written for pool {found}, current pool is {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Number of features for a pool of `pool_size` agents (terminator included).
pub fn feature_len(pool_size: usize) -> usize {
    1 + 1 + 3 * pool_size + 1 + HASH_BUCKETS
}

/// Dense feature vector describing a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.0[..])
    }
}

/// Feature layout for one pool.
///
/// `[bias | t/max_depth | counts/max_depth | last-agent one-hot |
///   cost/max cost | open-domain flag | hashed task text]`
#[derive(Debug, Clone)]
pub struct Featurizer {
    pool_size: usize,
    max_depth: usize,
    costs: Vec<f64>,
}

impl Featurizer {
    pub fn new(pool: &AgentPool, max_depth: usize) -> Self {
        let max_cost = pool.max_cost_factor();
        let costs = pool
            .agents()
            .iter()
            .map(|a| if max_cost > 0.0 { a.cost_factor / max_cost } else { 0.0 })
            .collect();
        Self {
            pool_size: pool.len(),
            max_depth: max_depth.max(1),
            costs,
        }
    }

    pub fn len(&self) -> usize {
        feature_len(self.pool_size)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn featurize(&self, state: &SystemState) -> FeatureVector {
        let n = self.pool_size;
        let depth = self.max_depth as f64;
        let mut x = vec![0.0; self.len()];
        x[0] = 1.0;
        x[1] = (state.step_count() as f64 / depth).min(1.0);
        for (k, count) in state.activation_counts(n).into_iter().enumerate() {
            x[2 + k] = (count as f64 / depth).min(1.0);
        }
        if let Some(last) = state.last_agent() {
            if last < n {
                x[2 + n + last] = 1.0;
            }
        }
        x[2 + 2 * n..2 + 3 * n].copy_from_slice(&self.costs);
        x[2 + 3 * n] = match state.task().domain {
            Domain::Closed => 0.0,
            Domain::Open => 1.0,
        };
        let hashed = hash_text(&state.task().text);
        x[3 + 3 * n..].copy_from_slice(&hashed);
        FeatureVector(x)
    }
}

/// Signed feature hashing of lower-cased whitespace tokens, scaled by token count.
pub fn hash_text(text: &str) -> [f64; HASH_BUCKETS] {
    let mut buckets = [0.0; HASH_BUCKETS];
    let mut n = 0usize;
    for token in text.split_whitespace() {
        let h = fnv1a(token.to_lowercase().as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        buckets[(h % HASH_BUCKETS as u64) as usize] += sign;
        n += 1;
    }
    if n > 0 {
        for b in &mut buckets {
            *b /= n as f64;
        }
    }
    buckets
}

/// Anything that can turn features into a distribution over pool agents.
pub trait ActionPolicy: Sync {
    fn action_distribution(&self, features: &FeatureVector, mask: &[bool]) -> Result<Vec<f64>, PolicyError>;

    /// Identifies the exact parameter values a trajectory was sampled under.
    fn fingerprint(&self) -> u64;
}

/// Weight matrix (one row per agent) and softmax temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub weights: Array2<f64>,
    pub temperature: f64,
}

impl PolicyParams {
    pub fn zeros(pool_size: usize, features: usize) -> Self {
        Self {
            weights: Array2::zeros((pool_size, features)),
            temperature: 1.0,
        }
    }

    /// Zero-initialized parameters sized for `pool`.
    pub fn for_pool(pool: &AgentPool) -> Self {
        Self::zeros(pool.len(), feature_len(pool.len()))
    }

    pub fn new(weights: Array2<f64>, temperature: f64) -> Result<Self, PolicyError> {
        let params = Self { weights, temperature };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(PolicyError::InvalidTemperature(self.temperature));
        }
        if !self.weights.iter().all(|w| w.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_len(&self) -> usize {
        self.weights.ncols()
    }

    pub fn check_shape(&self, pool_size: usize, features: usize) -> Result<(), PolicyError> {
        if self.pool_size() != pool_size {
            return Err(PolicyError::DimensionMismatch {
                expected: pool_size,
                got: self.pool_size(),
            });
        }
        if self.feature_len() != features {
            return Err(PolicyError::DimensionMismatch {
                expected: features,
                got: self.feature_len(),
            });
        }
        Ok(())
    }

    /// `w_k . x / temperature` for every agent.
    pub fn logits(&self, features: &FeatureVector) -> Result<Array1<f64>, PolicyError> {
        if features.len() != self.feature_len() {
            return Err(PolicyError::DimensionMismatch {
                expected: self.feature_len(),
                got: features.len(),
            });
        }
        Ok(self.weights.dot(&features.view()) / self.temperature)
    }

    pub fn distribution(&self, features: &FeatureVector, mask: &[bool]) -> Result<Vec<f64>, PolicyError> {
        let logits = self.logits(features)?;
        masked_softmax(logits.as_slice().expect("contiguous logits"), mask)
    }

    pub fn log_prob(&self, features: &FeatureVector, mask: &[bool], action: usize) -> Result<f64, PolicyError> {
        let probs = self.distribution(features, mask)?;
        match probs.get(action) {
            Some(&p) if p > 0.0 => Ok(p.ln()),
            _ => Err(PolicyError::MaskedAction(action)),
        }
    }

    /// Analytic `d log p(action) / d weights`.
    ///
    /// Row `k` is `x * (1{k = action} - p_k) / temperature`; masked rows are zero.
    pub fn log_prob_grad(
        &self,
        features: &FeatureVector,
        mask: &[bool],
        action: usize,
    ) -> Result<Array2<f64>, PolicyError> {
        let mut grad = Array2::zeros(self.weights.raw_dim());
        self.accumulate_log_prob_grad(features, mask, action, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `scale * d log p(action) / d weights` into `out`.
    pub fn accumulate_log_prob_grad(
        &self,
        features: &FeatureVector,
        mask: &[bool],
        action: usize,
        scale: f64,
        out: &mut Array2<f64>,
    ) -> Result<(), PolicyError> {
        let probs = self.distribution(features, mask)?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(PolicyError::MaskedAction(action));
        }
        let x = features.view();
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            if !mask[k] {
                continue;
            }
            let indicator = if k == action { 1.0 } else { 0.0 };
            let coeff = scale * (indicator - probs[k]) / self.temperature;
            if coeff != 0.0 {
                row.scaled_add(coeff, &x);
            }
        }
        Ok(())
    }

    /// `weights += step * gradient`.
    pub fn ascend(&mut self, gradient: &Array2<f64>, step: f64) {
        self.weights.scaled_add(step, gradient);
    }

    pub fn to_checkpoint(&self, pool: &AgentPool) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            pool_fingerprint: format!("{:016x}", pool.fingerprint()),
            temperature: self.temperature,
            weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn save(&self, pool: &AgentPool, path: &Path) -> Result<(), PolicyError> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint(pool))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path, pool: &AgentPool) -> Result<Self, PolicyError> {
        let checkpoint: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        checkpoint.into_params(pool)
    }
}

impl ActionPolicy for PolicyParams {
    fn action_distribution(&self, features: &FeatureVector, mask: &[bool]) -> Result<Vec<f64>, PolicyError> {
        self.distribution(features, mask)
    }

    fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(8 * (self.weights.len() + 3));
        bytes.extend_from_slice(&(self.weights.nrows() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.weights.ncols() as u64).to_le_bytes());
        bytes.extend_from_slice(&self.temperature.to_bits().to_le_bytes());
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_bits().to_le_bytes());
        }
        fnv1a(&bytes)
    }
}

/// Softmax over unmasked entries, shifted by the max for stability.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, PolicyError> {
    if mask.len() != logits.len() {
        return Err(PolicyError::DimensionMismatch {
            expected: logits.len(),
            got: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(PolicyError::AllMasked);
    }
    if !max.is_finite() {
        return Err(PolicyError::NonFinite);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { (z - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Inverse-CDF sampling from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// On-disk policy checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub pool_fingerprint: String,
    pub temperature: f64,
    pub weights: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn into_params(self, pool: &AgentPool) -> Result<PolicyParams, PolicyError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PolicyError::UnsupportedVersion(self.version));
        }
        let expected = format!("{:016x}", pool.fingerprint());
        if self.pool_fingerprint != expected {
            return Err(PolicyError::FingerprintMismatch {
                expected,
                found: self.pool_fingerprint,
            });
        }
        let rows = self.weights.len();
        let cols = feature_len(pool.len());
        if rows != pool.len() {
            return Err(PolicyError::DimensionMismatch { expected: pool.len(), got: rows });
        }
        let mut flat = Vec::with_capacity(rows * cols);
        for row in self.weights {
            if row.len() != cols {
                return Err(PolicyError::DimensionMismatch { expected: cols, got: row.len() });
            }
            flat.extend(row);
        }
        let weights = Array2::from_shape_vec((rows, cols), flat).expect("shape checked above");
        PolicyParams::new(weights, self.temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{build_pool, AgentSpec, PoolConfig, ReasoningPattern};
    use crate::orchestrator::StepRecord;
    use crate::task::TaskSpec;
    use proptest::prelude::*;

    fn pool(n: usize) -> AgentPool {
        let agents = (0..n)
            .map(|i| AgentSpec::new(format!("a{i}"), "sim", ReasoningPattern::Reasoning).with_cost(1.0 + i as f64))
            .collect();
        build_pool(&PoolConfig { agents, terminator: None }).unwrap()
    }

    #[test]
    fn empty_history_features() {
        let pool = pool(4);
        let f = Featurizer::new(&pool, 4);
        let state = SystemState::new(TaskSpec::closed("t", "add two numbers", "3"), 0);
        let x = f.featurize(&state);
        let n = pool.len();
        assert_eq!(x.len(), feature_len(n));
        assert_eq!(x.as_slice()[0], 1.0);
        assert_eq!(x.as_slice()[1], 0.0);
        assert!(x.as_slice()[2..2 + 2 * n].iter().all(|&v| v == 0.0));
        // costs 1..4 normalized by 4, terminator 0
        assert_eq!(&x.as_slice()[2 + 2 * n..2 + 3 * n], &[0.25, 0.5, 0.75, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_after_activation() {
        let pool = pool(5);
        let f = Featurizer::new(&pool, 4);
        let state = SystemState::new(TaskSpec::closed("t", "x", "3"), 0).with_step(StepRecord {
            agent_index: 3,
            output: "o".into(),
            tokens: 1,
            latent_correct: None,
        });
        let x = f.featurize(&state);
        let n = pool.len();
        let one_hot = &x.as_slice()[2 + n..2 + 2 * n];
        assert_eq!(one_hot[3], 1.0);
        assert_eq!(one_hot.iter().sum::<f64>(), 1.0);
        assert_eq!(x.as_slice()[1], 0.25);
        assert_eq!(x.as_slice()[2 + 3], 0.25);
    }

    #[test]
    fn uniform_at_zero_weights() {
        let params = PolicyParams::zeros(4, 3);
        let x = FeatureVector::new(vec![1.0, 0.5, -0.2]);
        let p = params.distribution(&x, &[true; 4]).unwrap();
        assert!(p.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn high_temperature_flattens() {
        let mut params = PolicyParams::zeros(4, 2);
        params.weights[[0, 0]] = 5.0;
        params.weights[[2, 1]] = -3.0;
        params.temperature = 1e6;
        let x = FeatureVector::new(vec![1.0, 1.0]);
        let p = params.distribution(&x, &[true; 4]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-3));
    }

    #[test]
    fn dominant_logit() {
        let mut params = PolicyParams::zeros(4, 1);
        params.weights[[1, 0]] = 10.0;
        let x = FeatureVector::new(vec![1.0]);
        let p = params.distribution(&x, &[true; 4]).unwrap();
        // e^10 / (e^10 + 3)
        let expected = 10f64.exp() / (10f64.exp() + 3.0);
        assert!((p[1] - expected).abs() < 1e-15);
        let pair = params.distribution(&x, &[false, true, true, false]).unwrap();
        assert!(pair[1] > 0.9999);
    }

    #[test]
    fn mask_errors() {
        let params = PolicyParams::zeros(3, 1);
        let x = FeatureVector::new(vec![1.0]);
        assert!(matches!(params.distribution(&x, &[false; 3]), Err(PolicyError::AllMasked)));
        assert!(matches!(
            params.log_prob_grad(&x, &[true, false, true], 1),
            Err(PolicyError::MaskedAction(1))
        ));
        assert!(matches!(
            params.distribution(&FeatureVector::new(vec![1.0, 2.0]), &[true; 3]),
            Err(PolicyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_unmasked_action_has_zero_gradient() {
        let mut params = PolicyParams::zeros(3, 2);
        params.weights[[0, 0]] = 0.7;
        let x = FeatureVector::new(vec![1.0, -2.0]);
        let g = params.log_prob_grad(&x, &[false, true, false], 1).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert_eq!(params.log_prob(&x, &[false, true, false], 1).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let pool_a = pool(3);
        let mut params = PolicyParams::for_pool(&pool_a);
        params.weights[[1, 2]] = 0.1 + 0.2;
        params.temperature = 0.75;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        params.save(&pool_a, &path).unwrap();
        let back = PolicyParams::load(&path, &pool_a).unwrap();
        assert_eq!(back, params);
        assert_eq!(back.fingerprint(), params.fingerprint());
        let pool_b = pool(4);
        assert!(matches!(
            PolicyParams::load(&path, &pool_b),
            Err(PolicyError::FingerprintMismatch { .. })
        ));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, f64)> {
        (2usize..6, 1usize..5).prop_flat_map(|(k, d)| {
            (
                prop::collection::vec(-3.0..3.0f64, k * d),
                prop::collection::vec(-2.0..2.0f64, d),
                prop::collection::vec(any::<bool>(), k),
                0.2..4.0f64,
            )
        })
    }

    proptest! {
        #[test]
        fn normalization_and_mask((w, x, mut mask, temp) in instance()) {
            let k = mask.len();
            mask[0] = true;
            let d = x.len();
            let params = PolicyParams::new(Array2::from_shape_vec((k, d), w).unwrap(), temp).unwrap();
            let x = FeatureVector::new(x);
            let p = params.distribution(&x, &mask).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (pk, mk) in p.iter().zip(&mask) {
                if !mk { prop_assert_eq!(*pk, 0.0); }
            }
            let g = params.log_prob_grad(&x, &mask, 0).unwrap();
            for (r, row) in g.rows().into_iter().enumerate() {
                if !mask[r] { prop_assert!(row.iter().all(|&v| v == 0.0)); }
            }
        }

        #[test]
        fn shift_invariance(logits in prop::collection::vec(-20.0..20.0f64, 2..8), c in -50.0..50.0f64) {
            let mask = vec![true; logits.len()];
            let p = masked_softmax(&logits, &mask).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
            let q = masked_softmax(&shifted, &mask).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
