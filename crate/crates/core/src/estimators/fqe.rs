//! Tabular fitted Q evaluation with cross-fitting.
//!
//! `Q_h(o, a)` is the value of taking `a` at `o` with `h` steps to go. Each
//! backup replaces `Q_h(o, a)` with the average over logged transitions from
//! `(o, a)` of `r + gamma * V_{h-1}(o')`, where `V` follows the evaluation
//! policy and terminal transitions bootstrap from zero. Pairs never seen in
//! the training data keep `Q = 0`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::mdp::{Dataset, TabularPolicy, Trajectory};
use crate::rng::derive_seed;

use super::importance::check_shape;
use super::EstimatorError;

/// Steps-to-go Q tables `Q_0 = 0, Q_1, ..., Q_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    tables: Vec<Vec<f64>>,
}

impl QTable {
    pub fn zeros(num_observations: usize, num_actions: usize, depth: usize) -> Self {
        Self { num_actions, tables: vec![vec![0.0; num_observations * num_actions]; depth + 1] }
    }

    pub fn depth(&self) -> usize {
        self.tables.len() - 1
    }

    /// `Q_h(o, a)`; `h` beyond the fitted depth is clamped.
    pub fn q(&self, steps_to_go: usize, observation: usize, action: usize) -> f64 {
        self.tables[steps_to_go.min(self.depth())][observation * self.num_actions + action]
    }

    /// `V_h(o) = sum_a pi(a | o) Q_h(o, a)`.
    pub fn v(&self, steps_to_go: usize, observation: usize, policy: &TabularPolicy) -> f64 {
        policy.row(observation).iter().enumerate().map(|(a, p)| p * self.q(steps_to_go, observation, a)).sum()
    }
}

/// Fits `depth` backups on the given trajectories.
pub fn fit_q<'a>(
    policy: &TabularPolicy,
    trajectories: impl Iterator<Item = &'a Trajectory> + Clone,
    num_observations: usize,
    num_actions: usize,
    discount: f64,
    depth: usize,
) -> QTable {
    let cells = num_observations * num_actions;
    let mut counts = vec![0usize; cells];
    for traj in trajectories.clone() {
        for s in traj.steps() {
            counts[s.observation * num_actions + s.action] += 1;
        }
    }
    let mut q = QTable::zeros(num_observations, num_actions, depth);
    for h in 1..=depth {
        let mut sums = vec![0.0; cells];
        for traj in trajectories.clone() {
            for s in traj.steps() {
                let future = if s.done { 0.0 } else { q.v(h - 1, s.next_observation, policy) };
                sums[s.observation * num_actions + s.action] += s.reward + discount * future;
            }
        }
        q.tables[h] = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    }
    q
}

fn trajectory_key(traj: &Trajectory) -> u64 {
    let mut h = DefaultHasher::new();
    for s in traj.steps() {
        (s.state, s.observation, s.action, s.next_state, s.next_observation, s.done).hash(&mut h);
        s.behavior_prob.to_bits().hash(&mut h);
        s.reward.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Balanced fold labels. Trajectories are ordered by a seeded hash of their
/// contents and dealt round-robin, so the assignment does not depend on the
/// order of the dataset.
pub(crate) fn assign_folds(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>, EstimatorError> {
    if folds == 0 || data.len() < folds {
        return Err(EstimatorError::InsufficientFolds);
    }
    let mut order: Vec<(u64, usize)> = data
        .trajectories()
        .iter()
        .enumerate()
        .map(|(i, t)| (derive_seed(seed, &[trajectory_key(t)]), i))
        .collect();
    order.sort_unstable();
    let mut labels = vec![0; data.len()];
    for (rank, (_, i)) in order.into_iter().enumerate() {
        labels[i] = rank % folds;
    }
    Ok(labels)
}

pub(crate) fn resolve_depth(data: &Dataset, iterations: Option<usize>) -> usize {
    iterations.unwrap_or(data.horizon).max(1)
}

/// One Q table per fold, each trained on every other fold (or on all data
/// when `folds == 1`).
pub(crate) fn cross_fitted_q(
    policy: &TabularPolicy,
    data: &Dataset,
    labels: &[usize],
    folds: usize,
    depth: usize,
) -> Result<Vec<QTable>, EstimatorError> {
    let trajs = data.trajectories();
    (0..folds)
        .map(|k| {
            if !labels.contains(&k) {
                return Err(EstimatorError::InsufficientFolds);
            }
            let train = trajs.iter().zip(labels).filter(move |(_, &l)| folds == 1 || l != k).map(|(t, _)| t);
            Ok(fit_q(policy, train, data.num_observations, data.num_actions, data.discount, depth))
        })
        .collect()
}

/// FQE with explicit fold labels in `0..folds`.
pub fn fqe_estimate_with_folds(
    policy: &TabularPolicy,
    data: &Dataset,
    labels: &[usize],
    folds: usize,
    iterations: Option<usize>,
) -> Result<f64, EstimatorError> {
    check_shape(policy, data)?;
    let depth = resolve_depth(data, iterations);
    let qs = cross_fitted_q(policy, data, labels, folds, depth)?;
    let mut total = 0.0;
    for (k, q) in qs.iter().enumerate() {
        let held_out: Vec<f64> = data
            .trajectories()
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == k)
            .map(|(t, _)| q.v(depth, t.initial_observation(), policy))
            .collect();
        total += held_out.iter().sum::<f64>() / held_out.len() as f64;
    }
    Ok(total / folds as f64)
}

/// Cross-fitted FQE with seeded balanced folds; `folds = 1` fits and
/// evaluates on the whole dataset.
pub fn fqe_estimate(
    policy: &TabularPolicy,
    data: &Dataset,
    folds: usize,
    iterations: Option<usize>,
    seed: u64,
) -> Result<f64, EstimatorError> {
    let labels = assign_folds(data, folds, seed)?;
    fqe_estimate_with_folds(policy, data, &labels, folds, iterations)
}
