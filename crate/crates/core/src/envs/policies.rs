//! Policy constructors: optimal policies by dynamic programming and
//! epsilon-noised variants.

use crate::mdp::{MdpError, TabularMdp, TabularPolicy};

/// `(1 - epsilon) * policy + epsilon * uniform`.
pub fn noised_policy(policy: &TabularPolicy, epsilon: f64) -> Result<TabularPolicy, MdpError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(MdpError::InvalidPolicy(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let uniform = 1.0 / policy.num_actions() as f64;
    let rows = policy
        .rows()
        .iter()
        .map(|row| row.iter().map(|p| (1.0 - epsilon) * p + epsilon * uniform).collect())
        .collect();
    TabularPolicy::new(rows)
}

/// Optimal action per state for the full horizon (greedy on the
/// `horizon`-steps-to-go optimal Q). Ties go to the lowest action id.
pub fn optimal_state_actions(mdp: &TabularMdp) -> Vec<usize> {
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    let mut value = vec![0.0; n];
    let mut best = vec![0; n];
    for _ in 0..mdp.horizon() {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if mdp.is_absorbing(s) {
                continue;
            }
            let mut top = (f64::NEG_INFINITY, 0);
            for a in 0..k {
                let q: f64 = mdp
                    .successors(s, a)
                    .iter()
                    .map(|&(s2, p)| p * (mdp.expected_reward(s, a, s2) + mdp.discount() * value[s2]))
                    .sum();
                if q > top.0 + 1e-12 {
                    top = (q, a);
                }
            }
            next[s] = top.0;
            best[s] = top.1;
        }
        value = next;
    }
    best
}

/// Expected number of visits to each state over one episode when actions
/// are drawn per state from `state_probs`.
pub fn state_occupancy(mdp: &TabularMdp, state_probs: &[Vec<f64>]) -> Vec<f64> {
    let n = mdp.num_states();
    let mut dist = mdp.initial().to_vec();
    let mut occupancy = vec![0.0; n];
    for _ in 0..mdp.horizon() {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if dist[s] == 0.0 || mdp.is_absorbing(s) {
                continue;
            }
            occupancy[s] += dist[s];
            for (a, &pa) in state_probs[s].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for &(s2, p) in mdp.successors(s, a) {
                    next[s2] += dist[s] * pa * p;
                }
            }
        }
        dist = next;
    }
    occupancy
}

/// Optimal policy expressed over observations.
///
/// When several states share an observation, the state-optimal action
/// distribution is averaged over those states weighted by how often the
/// optimal policy visits them. Observations never visited fall back to an
/// unweighted average over their states.
pub fn optimal_policy(mdp: &TabularMdp) -> Result<TabularPolicy, MdpError> {
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    let actions = optimal_state_actions(mdp);
    let state_probs: Vec<Vec<f64>> = actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            row
        })
        .collect();
    let occupancy = state_occupancy(mdp, &state_probs);

    let m = mdp.num_observations();
    let mut weighted = vec![vec![0.0; k]; m];
    let mut plain = vec![vec![0.0; k]; m];
    let mut mass = vec![0.0; m];
    let mut count = vec![0usize; m];
    for s in 0..n {
        let o = mdp.observation(s);
        weighted[o][actions[s]] += occupancy[s];
        plain[o][actions[s]] += 1.0;
        mass[o] += occupancy[s];
        count[o] += 1;
    }
    let rows = (0..m)
        .map(|o| {
            if mass[o] > 0.0 {
                weighted[o].iter().map(|w| w / mass[o]).collect()
            } else {
                plain[o].iter().map(|w| w / count[o] as f64).collect()
            }
        })
        .collect();
    TabularPolicy::new(rows)
}
