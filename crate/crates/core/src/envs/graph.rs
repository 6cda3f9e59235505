//! Layered binary ToyGraph.
//!
//! States `0..=2T`. State `0` is the start, layer `t` (for `1 <= t < T`)
//! holds states `2t-1` (odd) and `2t` (even), and `2T` is absorbing.
//! State `2T-1` is unreachable and kept only so the state ids match the
//! usual `x_abs = 2T` layout.
//!
//! From the start or any layer, action 0 moves to the odd child and action 1
//! to the even child of the next layer; with stochastic transitions the
//! destination parity flips with probability `slip_prob`. Entering an odd
//! state pays +1 and an even state -1. The final step moves every layer
//! `T-1` state into the absorbing state and pays a +1 bonus decided by the
//! parity of that penultimate state. Every episode therefore lasts exactly
//! `T` steps.

use serde::{Deserialize, Serialize};

use crate::mdp::{MdpError, MdpFile, TabularMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub horizon: usize,
    pub discount: f64,
    pub stochastic_transitions: bool,
    pub slip_prob: f64,
    pub stochastic_rewards: bool,
    /// Probability that a realized reward has its sign flipped.
    pub reward_noise_prob: f64,
    pub partially_observed: bool,
    /// `true`: bonus when the penultimate state is odd; `false`: when even.
    pub penultimate_bonus_on_odd: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            discount: 1.0,
            stochastic_transitions: false,
            slip_prob: 0.25,
            stochastic_rewards: false,
            reward_noise_prob: 0.25,
            partially_observed: false,
            penultimate_bonus_on_odd: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.horizon < 2 {
            return Err(MdpError::Invalid("graph horizon must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(MdpError::Invalid("slip_prob must lie in [0, 1)".into()));
        }
        if !(0.0..0.5).contains(&self.reward_noise_prob) {
            return Err(MdpError::Invalid("reward_noise_prob must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Absorbing state id.
    pub fn absorbing_state(&self) -> usize {
        2 * self.horizon
    }

    /// Upper bound on `|return|`.
    pub fn v_max(&self) -> f64 {
        (self.horizon + 1) as f64
    }
}

pub const NUM_ACTIONS: usize = 2;

pub fn build_graph(config: &GraphConfig) -> Result<TabularMdp, MdpError> {
    config.validate()?;
    let t_len = config.horizon;
    let n = 2 * t_len + 1;
    let abs = 2 * t_len;
    let slip = if config.stochastic_transitions { config.slip_prob } else { 0.0 };
    let mut transition = vec![vec![vec![0.0; n]; NUM_ACTIONS]; n];
    let mut reward = vec![vec![vec![0.0; n]; NUM_ACTIONS]; n];

    // Source states of each non-final step: the start, then layers 1..T-2.
    let mut sources: Vec<(usize, usize)> = vec![(0, 1)];
    for layer in 1..t_len.saturating_sub(1) {
        sources.push((2 * layer - 1, layer + 1));
        sources.push((2 * layer, layer + 1));
    }
    for &(s, next_layer) in &sources {
        let odd = 2 * next_layer - 1;
        let even = 2 * next_layer;
        for a in 0..NUM_ACTIONS {
            let (intended, other) = if a == 0 { (odd, even) } else { (even, odd) };
            transition[s][a][intended] += 1.0 - slip;
            transition[s][a][other] += slip;
            reward[s][a][odd] = 1.0;
            reward[s][a][even] = -1.0;
        }
    }
    // Final step out of layer T-1.
    let last = t_len - 1;
    for s in [2 * last - 1, 2 * last] {
        let odd = s % 2 == 1;
        let bonus = if odd == config.penultimate_bonus_on_odd { 1.0 } else { 0.0 };
        for a in 0..NUM_ACTIONS {
            transition[s][a][abs] = 1.0;
            reward[s][a][abs] = bonus;
        }
    }
    // Unreachable 2T-1 and the absorbing state loop with zero reward.
    for s in [2 * t_len - 1, abs] {
        for a in 0..NUM_ACTIONS {
            transition[s][a][s] = 1.0;
        }
    }

    let observation_map: Vec<usize> = if config.partially_observed {
        // start -> 0, layer t -> t, unreachable -> T, absorbing -> T + 1
        (0..n)
            .map(|s| match s {
                0 => 0,
                s if s == abs => t_len + 1,
                s if s == 2 * t_len - 1 => t_len,
                s => s.div_ceil(2),
            })
            .collect()
    } else {
        (0..n).collect()
    };
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;

    TabularMdp::from_file(MdpFile {
        num_states: n,
        num_actions: NUM_ACTIONS,
        horizon: t_len,
        discount: config.discount,
        transition,
        reward,
        initial,
        observation_map,
        reward_flip_prob: if config.stochastic_rewards { config.reward_noise_prob } else { 0.0 },
    })
}
