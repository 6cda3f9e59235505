//! Per-decision doubly robust estimator with a cross-fitted FQE control
//! variate.
//!
//! For a trajectory of length `T` the estimate is
//! `sum_t gamma^t [ w_t (r_t - Q(o_t, a_t)) + w_{t-1} V(o_t) ]` with
//! `w_{-1} = 1`, where `Q`/`V` at step `t` use `H - t` steps to go.
//! Each trajectory's control variate comes from the Q table fitted on the
//! folds it does not belong to.

use crate::mdp::{Dataset, TabularPolicy};

use super::fqe::{assign_folds, cross_fitted_q, resolve_depth, QTable};
use super::importance::{check_shape, cumulative_ratios};
use super::EstimatorError;

/// DR with a caller-supplied Q table per trajectory.
pub fn dr_estimate_with_q<'a>(
    policy: &TabularPolicy,
    data: &Dataset,
    q_for: impl Fn(usize) -> &'a QTable,
) -> Result<f64, EstimatorError> {
    check_shape(policy, data)?;
    let mut total = 0.0;
    for (i, traj) in data.trajectories().iter().enumerate() {
        let q = q_for(i);
        let ratios = cumulative_ratios(policy, traj)?;
        let mut prev_w = 1.0;
        let mut scale = 1.0;
        for (t, (step, &w)) in traj.steps().iter().zip(&ratios).enumerate() {
            let to_go = data.horizon.saturating_sub(t);
            let q_sa = q.q(to_go, step.observation, step.action);
            let v_s = q.v(to_go, step.observation, policy);
            total += scale * (w * (step.reward - q_sa) + prev_w * v_s);
            prev_w = w;
            scale *= data.discount;
        }
    }
    Ok(total / data.len() as f64)
}

pub fn dr_estimate(
    policy: &TabularPolicy,
    data: &Dataset,
    folds: usize,
    iterations: Option<usize>,
    seed: u64,
) -> Result<f64, EstimatorError> {
    check_shape(policy, data)?;
    let labels = assign_folds(data, folds, seed)?;
    let depth = resolve_depth(data, iterations);
    let qs = cross_fitted_q(policy, data, &labels, folds, depth)?;
    dr_estimate_with_q(policy, data, |i| &qs[labels[i]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::graph::{build_graph, GraphConfig};
    use crate::estimators::{fit_q, pdis_estimate};
    use crate::mdp::{rollout, true_value_dp};

    #[test]
    fn zero_q_reduces_to_pdis() {
        let mdp = build_graph(&GraphConfig { stochastic_transitions: true, ..Default::default() }).unwrap();
        let pi_b = TabularPolicy::uniform(mdp.num_observations(), 2);
        let pi_e = TabularPolicy::new(vec![vec![0.7, 0.3]; mdp.num_observations()]).unwrap();
        let data = rollout(&mdp, &pi_b, 50, 3).unwrap();
        let zero = QTable::zeros(mdp.num_observations(), 2, mdp.horizon());
        let dr = dr_estimate_with_q(&pi_e, &data, |_| &zero).unwrap();
        assert!((dr - pdis_estimate(&pi_e, &data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_and_zero_q_give_zero() {
        let data = Dataset::from_reward_sequences(&[vec![0.0, 0.0], vec![0.0], vec![0.0]], 1.0).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        assert_eq!(dr_estimate(&pi, &data, 2, None, 0).unwrap(), 0.0);
    }

    #[test]
    fn exact_q_on_deterministic_graph_is_exact() {
        let mdp = build_graph(&GraphConfig::default()).unwrap();
        let pi_b = TabularPolicy::uniform(mdp.num_observations(), 2);
        let pi_e = TabularPolicy::new(vec![vec![0.6, 0.4]; mdp.num_observations()]).unwrap();
        let data = rollout(&mdp, &pi_b, 200, 8).unwrap();
        let q = fit_q(&pi_e, data.trajectories().iter(), mdp.num_observations(), 2, 1.0, mdp.horizon());
        let dr = dr_estimate_with_q(&pi_e, &data, |_| &q).unwrap();
        let truth = true_value_dp(&mdp, &pi_e).unwrap();
        assert!((dr - truth).abs() < 1e-9, "{dr} vs {truth}");
    }
}
