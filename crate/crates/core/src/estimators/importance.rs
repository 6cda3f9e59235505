//! Importance-sampling estimators over trajectories.

use crate::mdp::{Dataset, TabularPolicy, Trajectory};

use super::EstimatorError;

pub(crate) fn check_shape(policy: &TabularPolicy, data: &Dataset) -> Result<(), EstimatorError> {
    if policy.num_observations() != data.num_observations || policy.num_actions() != data.num_actions {
        return Err(EstimatorError::ShapeMismatch(format!(
            "policy is {}x{}, data has {} observations and {} actions",
            policy.num_observations(),
            policy.num_actions(),
            data.num_observations,
            data.num_actions
        )));
    }
    Ok(())
}

/// Per-step cumulative importance ratios `w_0, ..., w_{T-1}` with
/// `w_t = prod_{s <= t} pi_e(a_s | o_s) / p_b,s`.
pub(crate) fn cumulative_ratios(policy: &TabularPolicy, traj: &Trajectory) -> Result<Vec<f64>, EstimatorError> {
    let mut w = 1.0;
    traj.steps()
        .iter()
        .map(|s| {
            if !(s.behavior_prob > 0.0) {
                return Err(EstimatorError::SupportViolation);
            }
            w *= policy.prob(s.observation, s.action) / s.behavior_prob;
            Ok(w)
        })
        .collect()
}

/// Product of per-step ratios over the whole trajectory.
pub fn trajectory_weight(policy: &TabularPolicy, traj: &Trajectory) -> Result<f64, EstimatorError> {
    Ok(cumulative_ratios(policy, traj)?.last().copied().unwrap_or(1.0))
}

fn weights_and_returns(policy: &TabularPolicy, data: &Dataset) -> Result<(Vec<f64>, Vec<f64>), EstimatorError> {
    check_shape(policy, data)?;
    let weights = data
        .trajectories()
        .iter()
        .map(|t| trajectory_weight(policy, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((weights, data.returns()))
}

/// Trajectory-wise importance sampling: `mean(w_tau * G(tau))`.
pub fn is_estimate(policy: &TabularPolicy, data: &Dataset) -> Result<f64, EstimatorError> {
    let (w, g) = weights_and_returns(policy, data)?;
    Ok(w.iter().zip(&g).map(|(w, g)| w * g).sum::<f64>() / data.len() as f64)
}

/// Weighted importance sampling: `sum(w G) / sum(w)`.
pub fn wis_estimate(policy: &TabularPolicy, data: &Dataset) -> Result<f64, EstimatorError> {
    let (w, g) = weights_and_returns(policy, data)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(EstimatorError::DegenerateWeights);
    }
    Ok(w.iter().zip(&g).map(|(w, g)| w * g).sum::<f64>() / total)
}

/// Per-decision importance sampling: `mean(sum_t gamma^t w_t r_t)`.
pub fn pdis_estimate(policy: &TabularPolicy, data: &Dataset) -> Result<f64, EstimatorError> {
    check_shape(policy, data)?;
    let mut total = 0.0;
    for traj in data.trajectories() {
        let ratios = cumulative_ratios(policy, traj)?;
        let mut scale = 1.0;
        for (step, w) in traj.steps().iter().zip(ratios) {
            total += scale * w * step.reward;
            scale *= data.discount;
        }
    }
    Ok(total / data.len() as f64)
}
