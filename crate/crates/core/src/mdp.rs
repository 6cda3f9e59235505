//! Decision-process primitives: tabular MDPs, policies, trajectories,
//! datasets and ground-truth policy values.
//!
//! A [`TabularMdp`] may be partially observed through an observation map;
//! policies act on observations while dynamics run on states. Episodes end
//! when an absorbing state is entered or after `horizon` steps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{sample_categorical, stream};

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("empty horizon")]
    EmptyHorizon,

    #[error("invalid decision process: {0}")]
    Invalid(String),

    #[error("line {line}: {message}")]
    AtLine { line: usize, message: String },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

// ── Tabular MDP ─────────────────────────────────────────────────────────

/// On-disk layout of a tabular decision process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub discount: f64,
    /// `[S][A][S]`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `[S][A][S]`
    pub reward: Vec<Vec<Vec<f64>>>,
    pub initial: Vec<f64>,
    pub observation_map: Vec<usize>,
    /// Probability that a realized reward has its sign flipped.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub reward_flip_prob: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Finite-horizon tabular decision process.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
    observation_map: Vec<usize>,
    num_observations: usize,
    reward_flip_prob: f64,
    absorbing: Vec<bool>,
    successors: Vec<Vec<(usize, f64)>>,
}

/// Where a validation failure sits inside an [`MdpFile`].
#[derive(Debug, Clone)]
struct Violation {
    field: &'static str,
    path: Vec<usize>,
    message: String,
}

impl Violation {
    fn new(field: &'static str, path: &[usize], message: impl Into<String>) -> Self {
        Self { field, path: path.to_vec(), message: message.into() }
    }

    fn describe(&self) -> String {
        let idx: String = self.path.iter().map(|i| format!("[{i}]")).collect();
        format!("{}{}: {}", self.field, idx, self.message)
    }
}

fn check_distribution(field: &'static str, path: &[usize], row: &[f64]) -> Result<(), Violation> {
    for (j, &p) in row.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            let mut at = path.to_vec();
            at.push(j);
            return Err(Violation::new(field, &at, format!("probability {p} is negative or not finite")));
        }
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Violation::new(field, path, format!("probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

impl MdpFile {
    fn validate(&self) -> Result<(), Violation> {
        let (s, a) = (self.num_states, self.num_actions);
        if s == 0 || a == 0 {
            return Err(Violation::new("num_states", &[], "need at least one state and one action"));
        }
        if self.horizon == 0 {
            return Err(Violation::new("horizon", &[], "empty horizon"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Violation::new("discount", &[], format!("discount {} outside (0, 1]", self.discount)));
        }
        if !(0.0..0.5).contains(&self.reward_flip_prob) {
            return Err(Violation::new("reward_flip_prob", &[], "must lie in [0, 0.5)"));
        }
        for (field, table) in [("transition", &self.transition), ("reward", &self.reward)] {
            if table.len() != s {
                return Err(Violation::new(field, &[], format!("expected {s} rows, found {}", table.len())));
            }
            for (i, per_action) in table.iter().enumerate() {
                if per_action.len() != a {
                    return Err(Violation::new(field, &[i], format!("expected {a} actions, found {}", per_action.len())));
                }
                for (j, row) in per_action.iter().enumerate() {
                    if row.len() != s {
                        return Err(Violation::new(field, &[i, j], format!("expected {s} entries, found {}", row.len())));
                    }
                    if field == "transition" {
                        check_distribution(field, &[i, j], row)?;
                    } else if let Some(k) = row.iter().position(|r| !r.is_finite()) {
                        return Err(Violation::new(field, &[i, j, k], "reward is not finite"));
                    }
                }
            }
        }
        if self.initial.len() != s {
            return Err(Violation::new("initial", &[], format!("expected {s} entries, found {}", self.initial.len())));
        }
        check_distribution("initial", &[], &self.initial)?;
        if self.observation_map.len() != s {
            return Err(Violation::new(
                "observation_map",
                &[],
                format!("expected {s} entries, found {}", self.observation_map.len()),
            ));
        }
        let num_obs = self.observation_map.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; num_obs];
        for &o in &self.observation_map {
            seen[o] = true;
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(Violation::new("observation_map", &[], format!("observation id {missing} is never produced")));
        }
        Ok(())
    }
}

impl TabularMdp {
    pub fn from_file(file: MdpFile) -> Result<Self, MdpError> {
        file.validate().map_err(|v| MdpError::Invalid(v.describe()))?;
        Ok(Self::build(file))
    }

    fn build(file: MdpFile) -> Self {
        let (s_n, a_n) = (file.num_states, file.num_actions);
        let transition: Vec<f64> = file.transition.into_iter().flatten().flatten().collect();
        let reward: Vec<f64> = file.reward.into_iter().flatten().flatten().collect();
        let num_observations = file.observation_map.iter().max().map_or(0, |m| m + 1);
        let successors: Vec<Vec<(usize, f64)>> = (0..s_n * a_n)
            .map(|sa| {
                transition[sa * s_n..(sa + 1) * s_n]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect();
        let absorbing = (0..s_n)
            .map(|s| {
                (0..a_n).all(|a| {
                    let sa = s * a_n + a;
                    transition[sa * s_n + s] == 1.0 && reward[sa * s_n + s] == 0.0
                })
            })
            .collect();
        Self {
            num_states: s_n,
            num_actions: a_n,
            horizon: file.horizon,
            discount: file.discount,
            transition,
            reward,
            initial: file.initial,
            observation_map: file.observation_map,
            num_observations,
            reward_flip_prob: file.reward_flip_prob,
            absorbing,
            successors,
        }
    }

    /// Parses and validates the JSON format. Invariant violations are
    /// reported with the line of the offending entry.
    pub fn from_json_str(text: &str) -> Result<Self, MdpError> {
        let file: MdpFile = serde_json::from_str(text)?;
        if let Err(v) = file.validate() {
            let line = locate_line(text, v.field, &v.path).unwrap_or(1);
            return Err(MdpError::AtLine { line, message: v.describe() });
        }
        Ok(Self::build(file))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| MdpError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> MdpFile {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let nest = |flat: &[f64]| -> Vec<Vec<Vec<f64>>> {
            (0..s_n)
                .map(|s| (0..a_n).map(|a| flat[(s * a_n + a) * s_n..(s * a_n + a + 1) * s_n].to_vec()).collect())
                .collect()
        };
        MdpFile {
            num_states: s_n,
            num_actions: a_n,
            horizon: self.horizon,
            discount: self.discount,
            transition: nest(&self.transition),
            reward: nest(&self.reward),
            initial: self.initial.clone(),
            observation_map: self.observation_map.clone(),
            reward_flip_prob: self.reward_flip_prob,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("tables are finite")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn observation(&self, state: usize) -> usize {
        self.observation_map[state]
    }

    pub fn observation_map(&self) -> &[usize] {
        &self.observation_map
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing[state]
    }

    pub fn reward_flip_prob(&self) -> f64 {
        self.reward_flip_prob
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Nominal reward for `(s, a, next)` before any sign flip.
    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Expected reward for `(s, a, next)` accounting for sign flips.
    pub fn expected_reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward(s, a, next) * (1.0 - 2.0 * self.reward_flip_prob)
    }

    /// Successor states with positive probability.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.num_actions + a]
    }

    /// Largest absolute reward in the table.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self, MdpError> {
        if horizon == 0 {
            return Err(MdpError::EmptyHorizon);
        }
        Ok(Self { horizon, ..self.clone() })
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<(), MdpError> {
        if policy.num_observations() != self.num_observations || policy.num_actions() != self.num_actions {
            return Err(MdpError::InvalidPolicy(format!(
                "policy is {}x{}, process has {} observations and {} actions",
                policy.num_observations(),
                policy.num_actions(),
                self.num_observations,
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// Finds the line holding `field[path...]` in a JSON document whose
/// top-level object has array-valued fields.
fn locate_line(text: &str, field: &str, path: &[usize]) -> Option<usize> {
    let bytes = text.as_bytes();
    let key = format!("\"{field}\"");
    let mut pos = text.find(&key)? + key.len();
    while pos < bytes.len() && bytes[pos] != b':' {
        pos += 1;
    }
    pos += 1;
    let skip_ws = |mut p: usize| {
        while p < bytes.len() && bytes[p].is_ascii_whitespace() {
            p += 1;
        }
        p
    };
    pos = skip_ws(pos);
    for &index in path {
        if bytes.get(pos) != Some(&b'[') {
            break;
        }
        pos += 1;
        let mut depth = 0usize;
        let mut seen = 0usize;
        while seen < index && pos < bytes.len() {
            match bytes[pos] {
                b'[' | b'{' => depth += 1,
                b']' | b'}' if depth == 0 => return None,
                b']' | b'}' => depth -= 1,
                b',' if depth == 0 => seen += 1,
                _ => {}
            }
            pos += 1;
        }
        pos = skip_ws(pos);
    }
    Some(text[..pos.min(text.len())].matches('\n').count() + 1)
}

// ── Policies ────────────────────────────────────────────────────────────

/// Stationary stochastic policy over observation ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TabularPolicy {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for TabularPolicy {
    type Error = MdpError;

    fn try_from(probs: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        Self::new(probs)
    }
}

impl From<TabularPolicy> for Vec<Vec<f64>> {
    fn from(p: TabularPolicy) -> Self {
        p.probs
    }
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        let a = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || a == 0 {
            return Err(MdpError::InvalidPolicy("empty probability table".into()));
        }
        for (o, row) in probs.iter().enumerate() {
            if row.len() != a {
                return Err(MdpError::InvalidPolicy(format!("row {o} has {} actions, expected {a}", row.len())));
            }
            check_distribution("policy", &[o], row).map_err(|v| MdpError::InvalidPolicy(v.describe()))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_observations: usize, num_actions: usize) -> Self {
        Self { probs: vec![vec![1.0 / num_actions as f64; num_actions]; num_observations] }
    }

    /// One action per observation with probability one.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self, MdpError> {
        let probs = actions
            .iter()
            .map(|&a| {
                if a >= num_actions {
                    return Err(MdpError::InvalidPolicy(format!("action {a} out of range")));
                }
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(probs)
    }

    pub fn num_observations(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, observation: usize, action: usize) -> f64 {
        self.probs[observation][action]
    }

    pub fn row(&self, observation: usize) -> &[f64] {
        &self.probs[observation]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

// ── Trajectories ────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub observation: usize,
    pub action: usize,
    /// Behavior policy's probability of `action` at `observation`.
    pub behavior_prob: f64,
    pub reward: f64,
    pub next_state: usize,
    pub next_observation: usize,
    /// `next_state` is absorbing.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Result<Self, MdpError> {
        if steps.is_empty() {
            return Err(MdpError::InvalidTrajectory("a trajectory needs at least one step".into()));
        }
        if let Some((t, s)) = steps.iter().enumerate().find(|(_, s)| !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0)) {
            return Err(MdpError::InvalidTrajectory(format!(
                "step {t}: behavior probability {} outside (0, 1]",
                s.behavior_prob
            )));
        }
        Ok(Self { steps })
    }

    /// Convenience constructor for reward-only trajectories on a single
    /// observation with behavior probability one.
    pub fn from_rewards(rewards: &[f64]) -> Result<Self, MdpError> {
        let last = rewards.len().saturating_sub(1);
        Self::new(
            rewards
                .iter()
                .enumerate()
                .map(|(t, &r)| Step {
                    state: 0,
                    observation: 0,
                    action: 0,
                    behavior_prob: 1.0,
                    reward: r,
                    next_state: 0,
                    next_observation: 0,
                    done: t == last,
                })
                .collect(),
        )
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn initial_observation(&self) -> usize {
        self.steps[0].observation
    }
}

/// `sum_t discount^t r_t` over the trajectory.
pub fn discounted_return(traj: &Trajectory, discount: f64) -> f64 {
    let mut g = 0.0;
    let mut scale = 1.0;
    for step in traj.steps() {
        g += scale * step.reward;
        scale *= discount;
    }
    g
}

/// Logged trajectories together with the shape of the space they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    pub discount: f64,
    pub horizon: usize,
    pub num_observations: usize,
    pub num_actions: usize,
}

impl Dataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        discount: f64,
        horizon: usize,
        num_observations: usize,
        num_actions: usize,
    ) -> Result<Self, MdpError> {
        if trajectories.is_empty() {
            return Err(MdpError::InvalidTrajectory("a dataset needs at least one trajectory".into()));
        }
        for (i, traj) in trajectories.iter().enumerate() {
            for step in traj.steps() {
                if step.observation >= num_observations
                    || step.next_observation >= num_observations
                    || step.action >= num_actions
                {
                    return Err(MdpError::InvalidTrajectory(format!("trajectory {i} leaves the declared space")));
                }
            }
        }
        Ok(Self { trajectories, discount, horizon, num_observations, num_actions })
    }

    /// Dataset over a single observation and action, built from per-trajectory
    /// reward sequences.
    pub fn from_reward_sequences(rewards: &[Vec<f64>], discount: f64) -> Result<Self, MdpError> {
        let trajectories = rewards.iter().map(|r| Trajectory::from_rewards(r)).collect::<Result<Vec<_>, _>>()?;
        let horizon = trajectories.iter().map(Trajectory::len).max().unwrap_or(1);
        Self::new(trajectories, discount, horizon, 1, 1)
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| discounted_return(t, self.discount)).collect()
    }

    /// Same metadata, different trajectories.
    pub fn with_trajectories(&self, trajectories: Vec<Trajectory>) -> Self {
        assert!(!trajectories.is_empty(), "a dataset needs at least one trajectory");
        Self { trajectories, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Self {
        Self {
            trajectories: Vec::new(),
            discount: self.discount,
            horizon: self.horizon,
            num_observations: self.num_observations,
            num_actions: self.num_actions,
        }
    }
}

// ── Ground truth ────────────────────────────────────────────────────────

/// Expected `h`-step values `V_h(s)` for `h = 0..=horizon` under `policy`.
pub fn state_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<Vec<f64>>, MdpError> {
    if mdp.horizon == 0 {
        return Err(MdpError::EmptyHorizon);
    }
    mdp.check_policy(policy)?;
    let mut values = vec![vec![0.0; mdp.num_states]];
    for _ in 0..mdp.horizon {
        let prev = values.last().expect("seeded");
        let next: Vec<f64> = (0..mdp.num_states)
            .map(|s| {
                if mdp.absorbing[s] {
                    return 0.0;
                }
                let probs = policy.row(mdp.observation(s));
                (0..mdp.num_actions)
                    .filter(|&a| probs[a] > 0.0)
                    .map(|a| {
                        probs[a]
                            * mdp
                                .successors(s, a)
                                .iter()
                                .map(|&(s2, p)| p * (mdp.expected_reward(s, a, s2) + mdp.discount * prev[s2]))
                                .sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        values.push(next);
    }
    Ok(values)
}

/// Exact `J(policy)` by finite-horizon backward induction.
pub fn true_value_dp(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64, MdpError> {
    let values = state_values(mdp, policy)?;
    let top = &values[mdp.horizon];
    Ok(mdp.initial.iter().zip(top).map(|(p, v)| p * v).sum())
}

/// Plays one episode; `rng` is consumed in a fixed order so episodes are
/// reproducible from their stream seed.
fn play_episode<R: rand::Rng>(mdp: &TabularMdp, policy: &TabularPolicy, rng: &mut R) -> Trajectory {
    let mut state = sample_categorical(&mdp.initial, rng);
    let mut steps = Vec::with_capacity(mdp.horizon);
    for _ in 0..mdp.horizon {
        let observation = mdp.observation(state);
        let probs = policy.row(observation);
        let action = sample_categorical(probs, rng);
        let row = &mdp.transition[(state * mdp.num_actions + action) * mdp.num_states..][..mdp.num_states];
        let next_state = sample_categorical(row, rng);
        let mut reward = mdp.reward(state, action, next_state);
        if mdp.reward_flip_prob > 0.0 && rng.random::<f64>() < mdp.reward_flip_prob {
            reward = -reward;
        }
        let done = mdp.absorbing[next_state];
        steps.push(Step {
            state,
            observation,
            action,
            behavior_prob: probs[action],
            reward,
            next_state,
            next_observation: mdp.observation(next_state),
            done,
        });
        if done {
            break;
        }
        state = next_state;
    }
    Trajectory { steps }
}

/// Samples `n` trajectories with `policy`; episode `i` draws from the stream
/// keyed by `(seed, i)`.
pub fn rollout(mdp: &TabularMdp, policy: &TabularPolicy, n: usize, seed: u64) -> Result<Dataset, MdpError> {
    if n == 0 {
        return Err(MdpError::InvalidTrajectory("rollout needs n >= 1".into()));
    }
    mdp.check_policy(policy)?;
    if mdp.initial.iter().zip(&mdp.absorbing).any(|(&p, &abs)| p > 0.0 && abs) {
        return Err(MdpError::Invalid("initial distribution puts mass on an absorbing state".into()));
    }
    let trajectories: Vec<Trajectory> = (0..n as u64)
        .into_par_iter()
        .map(|i| play_episode(mdp, policy, &mut stream(seed, &[i])))
        .collect();
    Dataset::new(trajectories, mdp.discount, mdp.horizon, mdp.num_observations, mdp.num_actions)
}

/// Monte-Carlo `J(policy)`: `(mean return, standard error)`.
pub fn true_value_mc(mdp: &TabularMdp, policy: &TabularPolicy, episodes: usize, seed: u64) -> Result<(f64, f64), MdpError> {
    let data = rollout(mdp, policy, episodes.max(1), seed)?;
    Ok(mean_and_stderr(&data.returns()))
}

/// Sample mean and its standard error (`sd / sqrt(n)`, `n - 1` denominator).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single state looping on itself with reward `r`.
    fn constant_mdp(r: f64, horizon: usize, discount: f64) -> TabularMdp {
        TabularMdp::from_file(MdpFile {
            num_states: 1,
            num_actions: 1,
            horizon,
            discount,
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![vec![r]]],
            initial: vec![1.0],
            observation_map: vec![0],
            reward_flip_prob: 0.0,
        })
        .unwrap()
    }

    /// s0 -> s1 -> s2 (absorbing); entering s1 pays +1, entering s2 pays -1.
    fn chain() -> TabularMdp {
        let mut transition = vec![vec![vec![0.0; 3]; 2]; 3];
        let mut reward = vec![vec![vec![0.0; 3]; 2]; 3];
        for a in 0..2 {
            transition[0][a][1] = 1.0;
            transition[1][a][2] = 1.0;
            transition[2][a][2] = 1.0;
            reward[0][a][1] = 1.0;
            reward[1][a][2] = -1.0;
        }
        TabularMdp::from_file(MdpFile {
            num_states: 3,
            num_actions: 2,
            horizon: 2,
            discount: 1.0,
            transition,
            reward,
            initial: vec![1.0, 0.0, 0.0],
            observation_map: vec![0, 1, 2],
            reward_flip_prob: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn discounted_return_examples() {
        let g = |r: &[f64], d| discounted_return(&Trajectory::from_rewards(r).unwrap(), d);
        assert_eq!(g(&[0.0, 0.0, 0.0], 0.9), 0.0);
        assert_eq!(g(&[1.0], 0.5), 1.0);
        assert_eq!(g(&[1.0, -1.0, 1.0], 0.5), 0.75);
    }

    #[test]
    fn dp_constant_reward() {
        let mdp = constant_mdp(1.0, 3, 1.0);
        assert_eq!(true_value_dp(&mdp, &TabularPolicy::uniform(1, 1)).unwrap(), 3.0);
    }

    #[test]
    fn dp_two_state_chain() {
        let mdp = chain();
        // +1 then -1, policy irrelevant.
        let v = true_value_dp(&mdp, &TabularPolicy::uniform(3, 2)).unwrap();
        assert_eq!(v, 0.0);
        let short = mdp.with_horizon(1).unwrap();
        assert_eq!(true_value_dp(&short, &TabularPolicy::uniform(3, 2)).unwrap(), 1.0);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let mdp = constant_mdp(1.0, 3, 1.0);
        assert!(matches!(mdp.with_horizon(0), Err(MdpError::EmptyHorizon)));
        let err = TabularMdp::from_json_str(
            r#"{"num_states":1,"num_actions":1,"horizon":0,"discount":1.0,
                "transition":[[[1.0]]],"reward":[[[1.0]]],"initial":[1.0],"observation_map":[0]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty horizon"), "{err}");
    }

    #[test]
    fn deterministic_mc_is_exact() {
        let mdp = chain();
        let policy = TabularPolicy::uniform(3, 2);
        let (mean, se) = true_value_mc(&mdp, &policy, 1000, 3).unwrap();
        assert_eq!(mean, true_value_dp(&mdp, &policy).unwrap());
        assert_eq!(se, 0.0);
    }

    #[test]
    fn rollout_is_reproducible_and_logs_support() {
        let mdp = chain();
        let policy = TabularPolicy::new(vec![vec![0.3, 0.7]; 3]).unwrap();
        let a = rollout(&mdp, &policy, 100, 11).unwrap();
        let b = rollout(&mdp, &policy, 100, 11).unwrap();
        assert_eq!(a, b);
        for t in a.trajectories() {
            assert_eq!(t.len(), 2);
            for s in t.steps() {
                assert!(s.behavior_prob > 0.0);
                assert_eq!(s.behavior_prob, policy.prob(s.observation, s.action));
            }
            assert!(t.steps()[1].done);
        }
    }

    #[test]
    fn single_deterministic_trajectory() {
        let mdp = chain();
        let policy = TabularPolicy::deterministic(&[0, 0, 0], 2).unwrap();
        let d = rollout(&mdp, &policy, 1, 0).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.trajectories()[0].steps().iter().all(|s| s.behavior_prob == 1.0));
    }

    #[test]
    fn loader_reports_line_of_bad_row() {
        let text = "{\n\"num_states\": 2,\n\"num_actions\": 1,\n\"horizon\": 2,\n\"discount\": 1.0,\n\"transition\": [\n  [[1.0, 0.0]],\n  [[0.5, 0.4]]\n],\n\"reward\": [[[0,0]],[[0,0]]],\n\"initial\": [1, 0],\n\"observation_map\": [0, 1]\n}";
        let err = TabularMdp::from_json_str(text).unwrap_err();
        match err {
            MdpError::AtLine { line, message } => {
                assert_eq!(line, 8, "{message}");
                assert!(message.contains("transition[1][0]"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn loader_rejects_uncovered_observation_ids() {
        let text = r#"{"num_states":2,"num_actions":1,"horizon":1,"discount":1.0,
            "transition":[[[1,0]],[[0,1]]],"reward":[[[0,0]],[[0,0]]],
            "initial":[1,0],"observation_map":[0,2]}"#;
        let err = TabularMdp::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("observation id 1"), "{err}");
    }

    #[test]
    fn json_roundtrip_preserves_values() {
        let mdp = chain();
        let back = TabularMdp::from_json_str(&mdp.to_json_string()).unwrap();
        let p = TabularPolicy::uniform(3, 2);
        assert_eq!(true_value_dp(&mdp, &p).unwrap(), true_value_dp(&back, &p).unwrap());
    }

    #[test]
    fn policy_rows_must_sum_to_one() {
        assert!(TabularPolicy::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(TabularPolicy::new(vec![vec![0.5, 0.5 + 1e-12]]).is_ok());
        assert!(TabularPolicy::new(vec![vec![1.2, -0.2]]).is_err());
    }
}
