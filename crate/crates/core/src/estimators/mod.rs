//! Base off-policy estimators and the string-keyed registry.
//!
//! Every estimator is a pure function of `(policy, data, seed)`. Tabular
//! estimators work on [`Dataset`]s of trajectories; the bandit family works
//! on [`BanditDataset`]s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::bandit::{BanditDataset, BanditPolicy};
use crate::mdp::{Dataset, TabularPolicy};

pub mod bandit;
pub mod dr;
pub mod fqe;
pub mod importance;
pub mod model_based;

pub use bandit::{bandit_is_estimate, bandit_wis_estimate, dm_kernel_estimate};
pub use dr::{dr_estimate, dr_estimate_with_q};
pub use fqe::{fit_q, fqe_estimate, fqe_estimate_with_folds, QTable};
pub use importance::{is_estimate, pdis_estimate, trajectory_weight, wis_estimate};
pub use model_based::mb_estimate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("support violation")]
    SupportViolation,

    #[error("degenerate weights")]
    DegenerateWeights,

    #[error("insufficient data for folds")]
    InsufficientFolds,

    #[error("policy and data disagree on shape: {0}")]
    ShapeMismatch(String),
}

/// Hyperparameters reported alongside an estimator id.
pub type Metadata = BTreeMap<String, f64>;

pub trait OpeEstimator<P: ?Sized, D: ?Sized>: Send + Sync {
    fn id(&self) -> String;

    fn metadata(&self) -> Metadata {
        Metadata::new()
    }

    fn estimate(&self, policy: &P, data: &D, seed: u64) -> Result<f64, EstimatorError>;
}

pub type TabularEstimator = Box<dyn OpeEstimator<TabularPolicy, Dataset>>;
pub type BanditEstimator = Box<dyn OpeEstimator<BanditPolicy, BanditDataset>>;

/// Wraps a closure as an estimator.
pub struct FnEstimator<F> {
    id: String,
    f: F,
}

impl<F> FnEstimator<F> {
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<P, D, F> OpeEstimator<P, D> for FnEstimator<F>
where
    P: ?Sized,
    D: ?Sized,
    F: Fn(&P, &D, u64) -> Result<f64, EstimatorError> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn estimate(&self, policy: &P, data: &D, seed: u64) -> Result<f64, EstimatorError> {
        (self.f)(policy, data, seed)
    }
}

// ── Tabular estimators ──────────────────────────────────────────────────

pub const DEFAULT_FOLDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Is;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wis;

/// Cross-fitted tabular FQE. `iterations = None` means the data horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fqe {
    pub folds: usize,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBased;

/// Per-decision doubly robust with a cross-fitted FQE control variate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublyRobust {
    pub folds: usize,
    pub iterations: Option<usize>,
}

impl Default for Fqe {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, iterations: None }
    }
}

impl Default for DoublyRobust {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, iterations: None }
    }
}

fn fold_metadata(folds: usize, iterations: Option<usize>) -> Metadata {
    let mut m = Metadata::new();
    m.insert("folds".into(), folds as f64);
    if let Some(it) = iterations {
        m.insert("iterations".into(), it as f64);
    }
    m
}

impl OpeEstimator<TabularPolicy, Dataset> for Is {
    fn id(&self) -> String {
        "is".into()
    }

    fn estimate(&self, policy: &TabularPolicy, data: &Dataset, _seed: u64) -> Result<f64, EstimatorError> {
        is_estimate(policy, data)
    }
}

impl OpeEstimator<TabularPolicy, Dataset> for Wis {
    fn id(&self) -> String {
        "wis".into()
    }

    fn estimate(&self, policy: &TabularPolicy, data: &Dataset, _seed: u64) -> Result<f64, EstimatorError> {
        wis_estimate(policy, data)
    }
}

impl OpeEstimator<TabularPolicy, Dataset> for Fqe {
    fn id(&self) -> String {
        "fqe".into()
    }

    fn metadata(&self) -> Metadata {
        fold_metadata(self.folds, self.iterations)
    }

    fn estimate(&self, policy: &TabularPolicy, data: &Dataset, seed: u64) -> Result<f64, EstimatorError> {
        fqe_estimate(policy, data, self.folds, self.iterations, seed)
    }
}

impl OpeEstimator<TabularPolicy, Dataset> for ModelBased {
    fn id(&self) -> String {
        "mb".into()
    }

    fn estimate(&self, policy: &TabularPolicy, data: &Dataset, _seed: u64) -> Result<f64, EstimatorError> {
        mb_estimate(policy, data)
    }
}

impl OpeEstimator<TabularPolicy, Dataset> for DoublyRobust {
    fn id(&self) -> String {
        "dr".into()
    }

    fn metadata(&self) -> Metadata {
        fold_metadata(self.folds, self.iterations)
    }

    fn estimate(&self, policy: &TabularPolicy, data: &Dataset, seed: u64) -> Result<f64, EstimatorError> {
        dr_estimate(policy, data, self.folds, self.iterations, seed)
    }
}

// ── Bandit estimators ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditIs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditWis;

/// Direct method with Nadaraya-Watson Gaussian-kernel reward regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmKernel {
    pub bandwidth: f64,
}

impl OpeEstimator<BanditPolicy, BanditDataset> for BanditIs {
    fn id(&self) -> String {
        "is".into()
    }

    fn estimate(&self, policy: &BanditPolicy, data: &BanditDataset, _seed: u64) -> Result<f64, EstimatorError> {
        bandit_is_estimate(policy, data)
    }
}

impl OpeEstimator<BanditPolicy, BanditDataset> for BanditWis {
    fn id(&self) -> String {
        "wis".into()
    }

    fn estimate(&self, policy: &BanditPolicy, data: &BanditDataset, _seed: u64) -> Result<f64, EstimatorError> {
        bandit_wis_estimate(policy, data)
    }
}

impl OpeEstimator<BanditPolicy, BanditDataset> for DmKernel {
    fn id(&self) -> String {
        format!("dm-kernel:{}", self.bandwidth)
    }

    fn metadata(&self) -> Metadata {
        Metadata::from([("bandwidth".to_string(), self.bandwidth)])
    }

    fn estimate(&self, policy: &BanditPolicy, data: &BanditDataset, _seed: u64) -> Result<f64, EstimatorError> {
        Ok(dm_kernel_estimate(policy, data, self.bandwidth))
    }
}

// ── Registry ────────────────────────────────────────────────────────────

/// An estimator entry in an experiment file: a bare id string, or an id with
/// hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimatorSpec {
    Id(String),
    Detailed {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        folds: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iterations: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown estimator id `{0}`")]
    Unknown(String),

    #[error("estimator `{0}` is not available for this environment")]
    Unsupported(String),

    #[error("estimator `{id}`: {message}")]
    BadParameter { id: String, message: String },
}

impl EstimatorSpec {
    pub fn id(&self) -> &str {
        match self {
            Self::Id(id) | Self::Detailed { id, .. } => id,
        }
    }

    fn folds(&self) -> Result<usize, RegistryError> {
        match self {
            Self::Detailed { folds: Some(0), id, .. } => {
                Err(RegistryError::BadParameter { id: id.clone(), message: "folds must be at least 1".into() })
            }
            Self::Detailed { folds: Some(k), .. } => Ok(*k),
            _ => Ok(DEFAULT_FOLDS),
        }
    }

    fn iterations(&self) -> Result<Option<usize>, RegistryError> {
        match self {
            Self::Detailed { iterations: Some(0), id, .. } => {
                Err(RegistryError::BadParameter { id: id.clone(), message: "iterations must be at least 1".into() })
            }
            Self::Detailed { iterations, .. } => Ok(*iterations),
            Self::Id(_) => Ok(None),
        }
    }
}

const TABULAR_IDS: [&str; 5] = ["is", "wis", "fqe", "mb", "dr"];

pub fn tabular_estimator(spec: &EstimatorSpec) -> Result<TabularEstimator, RegistryError> {
    let id = spec.id();
    Ok(match id {
        "is" => Box::new(Is),
        "wis" => Box::new(Wis),
        "fqe" => Box::new(Fqe { folds: spec.folds()?, iterations: spec.iterations()? }),
        "mb" => Box::new(ModelBased),
        "dr" => Box::new(DoublyRobust { folds: spec.folds()?, iterations: spec.iterations()? }),
        _ if id == "dm-kernel" || id.starts_with("dm-kernel:") => return Err(RegistryError::Unsupported(id.into())),
        _ => return Err(RegistryError::Unknown(id.into())),
    })
}

/// Resolves bandit estimator ids. Bare `dm-kernel` expands to one estimator
/// per entry of `bandwidths`.
pub fn bandit_estimators(spec: &EstimatorSpec, bandwidths: &[f64]) -> Result<Vec<BanditEstimator>, RegistryError> {
    let id = spec.id();
    match id {
        "is" => Ok(vec![Box::new(BanditIs)]),
        "wis" => Ok(vec![Box::new(BanditWis)]),
        "dm-kernel" => Ok(bandwidths.iter().map(|&bandwidth| Box::new(DmKernel { bandwidth }) as BanditEstimator).collect()),
        _ => {
            if let Some(raw) = id.strip_prefix("dm-kernel:") {
                let bandwidth: f64 = raw.parse().map_err(|_| RegistryError::BadParameter {
                    id: id.into(),
                    message: format!("bandwidth `{raw}` is not a number"),
                })?;
                if !(bandwidth > 0.0) {
                    return Err(RegistryError::BadParameter { id: id.into(), message: "bandwidth must be positive".into() });
                }
                Ok(vec![Box::new(DmKernel { bandwidth })])
            } else if TABULAR_IDS.contains(&id) {
                Err(RegistryError::Unsupported(id.into()))
            } else {
                Err(RegistryError::Unknown(id.into()))
            }
        }
    }
}
