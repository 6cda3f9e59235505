//! Model-based estimate: maximum-likelihood tabular model plus exact
//! finite-horizon evaluation.
//!
//! The model lives on observations with one extra terminal node. Pairs that
//! never occur in the data self-loop with reward 0.

use crate::mdp::{Dataset, TabularPolicy};

use super::importance::check_shape;
use super::EstimatorError;

pub fn mb_estimate(policy: &TabularPolicy, data: &Dataset) -> Result<f64, EstimatorError> {
    check_shape(policy, data)?;
    let (m, k) = (data.num_observations, data.num_actions);
    let terminal = m;
    let nodes = m + 1;

    // counts[(o, a)] -> list of (next node, count, reward sum)
    let mut counts: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); m * k];
    let mut totals = vec![0.0; m * k];
    let mut initial = vec![0.0; nodes];
    for traj in data.trajectories() {
        initial[traj.initial_observation()] += 1.0;
        for s in traj.steps() {
            let cell = s.observation * k + s.action;
            let next = if s.done { terminal } else { s.next_observation };
            totals[cell] += 1.0;
            match counts[cell].iter_mut().find(|(n, _, _)| *n == next) {
                Some(e) => {
                    e.1 += 1.0;
                    e.2 += s.reward;
                }
                None => counts[cell].push((next, 1.0, s.reward)),
            }
        }
    }

    let mut value = vec![0.0; nodes];
    for _ in 0..data.horizon {
        let mut next_value = vec![0.0; nodes];
        for o in 0..m {
            let mut v = 0.0;
            for (a, &p) in policy.row(o).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let cell = o * k + a;
                let q = if totals[cell] == 0.0 {
                    data.discount * value[o]
                } else {
                    counts[cell]
                        .iter()
                        .map(|&(next, c, r_sum)| (c / totals[cell]) * (r_sum / c + data.discount * value[next]))
                        .sum()
                };
                v += p * q;
            }
            next_value[o] = v;
        }
        value = next_value;
    }
    let n = data.len() as f64;
    Ok(initial.iter().zip(&value).map(|(c, v)| c / n * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::graph::{build_graph, GraphConfig};
    use crate::mdp::{rollout, true_value_dp};

    #[test]
    fn covering_data_recovers_deterministic_truth() {
        let mdp = build_graph(&GraphConfig::default()).unwrap();
        let pi_b = TabularPolicy::uniform(mdp.num_observations(), 2);
        let pi_e = TabularPolicy::new(vec![vec![0.9, 0.1]; mdp.num_observations()]).unwrap();
        let data = rollout(&mdp, &pi_b, 400, 1).unwrap();
        let truth = true_value_dp(&mdp, &pi_e).unwrap();
        assert!((mb_estimate(&pi_e, &data).unwrap() - truth).abs() < 1e-12);
    }

    #[test]
    fn uncovered_actions_score_zero() {
        let mdp = build_graph(&GraphConfig::default()).unwrap();
        let only_zero = TabularPolicy::deterministic(&vec![0; mdp.num_observations()], 2).unwrap();
        let only_one = TabularPolicy::deterministic(&vec![1; mdp.num_observations()], 2).unwrap();
        let data = rollout(&mdp, &only_zero, 10, 1).unwrap();
        assert_eq!(mb_estimate(&only_one, &data).unwrap(), 0.0);
    }
}
