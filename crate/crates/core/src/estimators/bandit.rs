//! Contextual-bandit estimators: importance sampling and the kernel direct
//! method.

use crate::envs::bandit::{BanditDataset, BanditPolicy};

use super::EstimatorError;

fn weights(policy: &BanditPolicy, data: &BanditDataset) -> Result<Vec<f64>, EstimatorError> {
    data.samples()
        .iter()
        .map(|s| {
            if !(s.propensity > 0.0) {
                return Err(EstimatorError::SupportViolation);
            }
            Ok(policy.probs(&s.context)[s.action] / s.propensity)
        })
        .collect()
}

pub fn bandit_is_estimate(policy: &BanditPolicy, data: &BanditDataset) -> Result<f64, EstimatorError> {
    let w = weights(policy, data)?;
    Ok(w.iter().zip(data.samples()).map(|(w, s)| w * s.reward).sum::<f64>() / data.len() as f64)
}

pub fn bandit_wis_estimate(policy: &BanditPolicy, data: &BanditDataset) -> Result<f64, EstimatorError> {
    let w = weights(policy, data)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(EstimatorError::DegenerateWeights);
    }
    Ok(w.iter().zip(data.samples()).map(|(w, s)| w * s.reward).sum::<f64>() / total)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Direct method: the reward of each action at each logged context is
/// predicted by Nadaraya-Watson regression with a Gaussian kernel over the
/// samples that took that action, then averaged under the evaluation
/// policy. Actions never logged predict 0.
pub fn dm_kernel_estimate(policy: &BanditPolicy, data: &BanditDataset, bandwidth: f64) -> f64 {
    let samples = data.samples();
    let k = data.num_actions;
    let mut by_action: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, s) in samples.iter().enumerate() {
        by_action[s.action].push(j);
    }
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut total = 0.0;
    for s in samples {
        let probs = policy.probs(&s.context);
        for (a, idx) in by_action.iter().enumerate() {
            if idx.is_empty() || probs[a] == 0.0 {
                continue;
            }
            let logits: Vec<f64> =
                idx.iter().map(|&j| -squared_distance(&s.context, &samples[j].context) * inv).collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (&j, l) in idx.iter().zip(&logits) {
                let w = (l - top).exp();
                num += w * samples[j].reward;
                den += w;
            }
            total += probs[a] * num / den;
        }
    }
    total / samples.len() as f64
}
