//! Off-policy evaluation with bootstrapped ensemble weighting.
//!
//! A set of off-policy estimators is run on one logged dataset, a bootstrap
//! over subsamples estimates their joint error matrix, and the estimates are
//! combined with weights summing to one that minimize the estimated MSE.
//!
//! The numeric core ([`linalg`], [`bootstrap`] matrices, [`aggregate`]) is
//! generic over [`Scalar`] (`f32` or `f64`); environments, estimators and the
//! harness work in `f64`. The `*64` / `*32` aliases below pin the precision.

pub mod aggregate;
pub mod bootstrap;
pub mod envs;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod scalar;

pub use aggregate::{
    avg_ope_score, best_ope_score, opera_is_score, opera_magic_score, opera_score, solve_weights, AggregateError,
    EnsembleScore, Method, WeightVector,
};
pub use bootstrap::{
    build_error_matrix, collect_reports, BootstrapError, BootstrapPlan, Centering, ErrorMatrix, EstimatorReport,
};
pub use estimators::{EstimatorError, OpeEstimator};
pub use linalg::Matrix;
pub use mdp::{Dataset, TabularMdp, TabularPolicy, Trajectory};
pub use scalar::Scalar;

// ── Precision aliases ───────────────────────────────────────────────────

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type ErrorMatrix64 = ErrorMatrix<f64>;
pub type ErrorMatrix32 = ErrorMatrix<f32>;
pub type WeightVector64 = WeightVector<f64>;
pub type WeightVector32 = WeightVector<f32>;
pub type EnsembleScore64 = EnsembleScore<f64>;
pub type EnsembleScore32 = EnsembleScore<f32>;
pub type EstimatorReport64 = EstimatorReport<f64>;
pub type EstimatorReport32 = EstimatorReport<f32>;
