//! Synthetic contextual bandit with a fixed random nonlinear reward surface.
//!
//! Contexts are standard normal vectors. The expected reward of action `a`
//! at context `x` is `v_a . tanh(W x + b) + c_a`, with all parameters drawn
//! once from `reward_function_seed`. Logged rewards add Gaussian noise.
//!
//! The behavior policy is a softmax over the reward surface plus an
//! independent random linear score, mixed with a little uniform noise so
//! every propensity stays positive. Evaluation policies are epsilon-greedy
//! on the true surface.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mdp::{mean_and_stderr, MdpError};
use crate::rng::{sample_categorical, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub feature_dim: usize,
    pub num_actions: usize,
    pub hidden_units: usize,
    pub reward_function_seed: u64,
    /// Kernel bandwidths for the direct-method family, ascending.
    pub bandwidths: Vec<f64>,
    pub noise_std: f64,
    pub behavior_temperature: f64,
    /// Weight of the random linear score in the behavior logits.
    pub behavior_distortion: f64,
    pub behavior_epsilon: f64,
}

/// `count` values spaced evenly in log scale from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    // Rounded to 12 significant digits.
    (0..count)
        .map(|i| format!("{:.11e}", lo * (step * i as f64).exp()).parse().expect("formatted float parses"))
        .collect()
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            feature_dim: 10,
            num_actions: 5,
            hidden_units: 16,
            reward_function_seed: 7,
            bandwidths: log_spaced(0.5, 64.0, 8),
            noise_std: 0.5,
            behavior_temperature: 0.5,
            behavior_distortion: 1.0,
            behavior_epsilon: 0.1,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.feature_dim == 0 || self.num_actions == 0 || self.hidden_units == 0 {
            return Err(MdpError::Invalid("feature_dim, num_actions and hidden_units must be positive".into()));
        }
        if self.bandwidths.iter().any(|b| !(*b > 0.0)) || self.bandwidths.windows(2).any(|w| w[0] > w[1]) {
            return Err(MdpError::Invalid("bandwidths must be positive and sorted ascending".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.behavior_temperature > 0.0) {
            return Err(MdpError::Invalid("noise_std must be >= 0 and behavior_temperature > 0".into()));
        }
        if !(self.behavior_epsilon > 0.0 && self.behavior_epsilon <= 1.0) {
            return Err(MdpError::Invalid("behavior_epsilon must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Surface {
    dim: usize,
    num_actions: usize,
    hidden_w: Vec<Vec<f64>>,
    hidden_b: Vec<f64>,
    out_v: Vec<Vec<f64>>,
    out_c: Vec<f64>,
    distortion: Vec<Vec<f64>>,
    noise_std: f64,
    temperature: f64,
    distortion_weight: f64,
    behavior_epsilon: f64,
}

impl Surface {
    fn expected_rewards(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self
            .hidden_w
            .iter()
            .zip(&self.hidden_b)
            .map(|(w, b)| (dot(w, x) + b).tanh())
            .collect();
        self.out_v.iter().zip(&self.out_c).map(|(v, c)| dot(v, &hidden) + c).collect()
    }

    fn behavior_probs(&self, x: &[f64]) -> Vec<f64> {
        let f = self.expected_rewards(x);
        let logits: Vec<f64> = f
            .iter()
            .zip(&self.distortion)
            .map(|(fa, u)| (fa + self.distortion_weight * dot(u, x)) / self.temperature)
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = exp.iter().sum();
        let uniform = self.behavior_epsilon / self.num_actions as f64;
        exp.iter().map(|e| (1.0 - self.behavior_epsilon) * e / z + uniform).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normal_vec<R: Rng>(rng: &mut R, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// One logged interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSample {
    pub context: Vec<f64>,
    pub action: usize,
    /// Behavior probability of `action`.
    pub propensity: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditDataset {
    samples: Vec<BanditSample>,
    pub num_actions: usize,
}

impl BanditDataset {
    pub fn new(samples: Vec<BanditSample>, num_actions: usize) -> Result<Self, MdpError> {
        if samples.is_empty() {
            return Err(MdpError::InvalidTrajectory("a dataset needs at least one sample".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.action >= num_actions || !(s.propensity > 0.0 && s.propensity <= 1.0)) {
            return Err(MdpError::InvalidTrajectory(format!(
                "sample with action {} and propensity {} is not a valid log entry",
                s.action, s.propensity
            )));
        }
        Ok(Self { samples, num_actions })
    }

    pub fn samples(&self) -> &[BanditSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_samples(&self, samples: Vec<BanditSample>) -> Self {
        assert!(!samples.is_empty(), "a dataset needs at least one sample");
        Self { samples, num_actions: self.num_actions }
    }

    pub fn mean_reward(&self) -> f64 {
        self.samples.iter().map(|s| s.reward).sum::<f64>() / self.len() as f64
    }
}

/// How a [`BanditPolicy`] picks actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BanditPolicyKind {
    /// The logging policy.
    Behavior,
    /// `(1 - epsilon) * argmax expected reward + epsilon * uniform`.
    Greedy { epsilon: f64 },
    Uniform,
}

/// Context-dependent policy bound to a bandit problem.
#[derive(Debug, Clone)]
pub struct BanditPolicy {
    surface: Arc<Surface>,
    pub kind: BanditPolicyKind,
}

impl BanditPolicy {
    pub fn probs(&self, context: &[f64]) -> Vec<f64> {
        let k = self.surface.num_actions;
        match self.kind {
            BanditPolicyKind::Behavior => self.surface.behavior_probs(context),
            BanditPolicyKind::Uniform => vec![1.0 / k as f64; k],
            BanditPolicyKind::Greedy { epsilon } => {
                let f = self.surface.expected_rewards(context);
                let best = argmax(&f);
                (0..k)
                    .map(|a| epsilon / k as f64 + if a == best { 1.0 - epsilon } else { 0.0 })
                    .collect()
            }
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// A built bandit problem: the reward surface plus its logging policy.
#[derive(Debug, Clone)]
pub struct BanditProblem {
    surface: Arc<Surface>,
    config: BanditConfig,
}

pub fn build_bandit(config: &BanditConfig) -> Result<BanditProblem, MdpError> {
    config.validate()?;
    let mut rng = stream(config.reward_function_seed, &[0]);
    let (d, h, k) = (config.feature_dim, config.hidden_units, config.num_actions);
    let hidden_w = (0..h).map(|_| normal_vec(&mut rng, d, 1.0 / (d as f64).sqrt())).collect();
    let hidden_b = normal_vec(&mut rng, h, 0.5);
    let out_v = (0..k).map(|_| normal_vec(&mut rng, h, 1.0 / (h as f64).sqrt())).collect();
    let out_c = normal_vec(&mut rng, k, 0.25);
    let distortion = (0..k).map(|_| normal_vec(&mut rng, d, 1.0 / (d as f64).sqrt())).collect();
    Ok(BanditProblem {
        surface: Arc::new(Surface {
            dim: d,
            num_actions: k,
            hidden_w,
            hidden_b,
            out_v,
            out_c,
            distortion,
            noise_std: config.noise_std,
            temperature: config.behavior_temperature,
            distortion_weight: config.behavior_distortion,
            behavior_epsilon: config.behavior_epsilon,
        }),
        config: config.clone(),
    })
}

impl BanditProblem {
    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        self.surface.num_actions
    }

    pub fn policy(&self, kind: BanditPolicyKind) -> BanditPolicy {
        BanditPolicy { surface: Arc::clone(&self.surface), kind }
    }

    pub fn behavior(&self) -> BanditPolicy {
        self.policy(BanditPolicyKind::Behavior)
    }

    pub fn expected_rewards(&self, context: &[f64]) -> Vec<f64> {
        self.surface.expected_rewards(context)
    }

    /// `n` logged samples from `logging`; sample `i` uses stream `(seed, i)`.
    pub fn sample(&self, logging: &BanditPolicy, n: usize, seed: u64) -> Result<BanditDataset, MdpError> {
        let s = &self.surface;
        let samples = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, &[i]);
                let context = normal_vec(&mut rng, s.dim, 1.0);
                let probs = logging.probs(&context);
                let action = sample_categorical(&probs, &mut rng);
                let noise: f64 = StandardNormal.sample(&mut rng);
                let reward = s.expected_rewards(&context)[action] + s.noise_std * noise;
                BanditSample { context, action, propensity: probs[action], reward }
            })
            .collect();
        BanditDataset::new(samples, s.num_actions)
    }

    /// Monte-Carlo value of `policy` on the noiseless surface:
    /// `(mean, standard error)`.
    pub fn true_value(&self, policy: &BanditPolicy, contexts: usize, seed: u64) -> (f64, f64) {
        let s = &self.surface;
        let values: Vec<f64> = (0..contexts.max(1) as u64)
            .into_par_iter()
            .map(|i| {
                let context = normal_vec(&mut stream(seed, &[i]), s.dim, 1.0);
                dot(&policy.probs(&context), &s.expected_rewards(&context))
            })
            .collect();
        mean_and_stderr(&values)
    }

    /// Largest `|reward|` over a calibration draw from the behavior policy.
    pub fn v_max(&self, calibration: usize) -> f64 {
        let data = self
            .sample(&self.behavior(), calibration.max(1), self.config.reward_function_seed ^ 0xCA1B)
            .expect("behavior propensities are positive");
        data.samples().iter().map(|s| s.reward.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    }
}
