//! Subsample bootstrap: per-estimator replicates on shared resamples, the
//! error matrix, and MSE estimates.
//!
//! Resample `j` draws `n1` units with replacement from the stream
//! `(plan.seed, j)` and every estimator is evaluated on that same resample.
//! The error matrix is `(n1 / n) / B * sum_j delta_j delta_j^T` where
//! `delta_j` holds each estimator's replicate minus its center.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::envs::bandit::BanditDataset;
use crate::estimators::{EstimatorError, OpeEstimator};
use crate::linalg::Matrix;
use crate::mdp::Dataset;
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;

/// Largest tolerated fraction of replicates that fell back to the point.
pub const MAX_FALLBACK_RATE: f64 = 0.2;

const POINT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("invalid bootstrap plan: {0}")]
    InvalidPlan(String),

    #[error("estimator `{id}` failed on the full dataset: {source}")]
    PointFailed { id: String, source: EstimatorError },

    #[error("unstable estimator under subsampling: `{id}` fell back on {fallbacks} of {resamples} resamples")]
    Unstable { id: String, fallbacks: usize, resamples: usize },

    #[error("reports disagree on the number of resamples ({expected} vs {found})")]
    MismatchedResamples { expected: usize, found: usize },

    #[error("centering estimator `{0}` is not among the reports")]
    MissingCenter(String),

    #[error("no reports to combine")]
    Empty,
}

// ── Plan ────────────────────────────────────────────────────────────────

/// What each estimator's replicates are measured against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Each estimator's own full-data point.
    #[serde(rename = "self")]
    SelfPoint,
    /// The full-data point of a designated consistent estimator.
    Consistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapPlan {
    /// Number of resamples `B`.
    pub resamples: usize,
    /// Subsample exponent: `n1 = ceil(n^eta)`.
    pub eta: f64,
    /// Fixed subsample size overriding `eta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_size: Option<usize>,
    pub seed: u64,
    pub centering: Centering,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self { resamples: 200, eta: 0.5, subsample_size: None, seed: 0, centering: Centering::SelfPoint }
    }
}

impl BootstrapPlan {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.resamples < 2 {
            return Err(BootstrapError::InvalidPlan("need at least 2 resamples".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(BootstrapError::InvalidPlan(format!("eta {} outside (0, 1]", self.eta)));
        }
        if self.subsample_size == Some(0) {
            return Err(BootstrapError::InvalidPlan("subsample_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Subsample size for a dataset of `n` units.
    pub fn subsample_size(&self, n: usize) -> usize {
        self.subsample_size.unwrap_or_else(|| (n as f64).powf(self.eta).ceil() as usize).max(1)
    }

    /// The `n1 / n` factor applied to the error matrix.
    pub fn scale<T: Scalar>(&self, n: usize) -> T {
        T::from_usize_lossy(self.subsample_size(n)) / T::from_usize_lossy(n.max(1))
    }

    pub fn with_centering(&self, centering: Centering) -> Self {
        Self { centering, ..self.clone() }
    }
}

// ── Resampling ──────────────────────────────────────────────────────────

/// A dataset made of exchangeable units that can be subset by index.
pub trait Resample: Sized + Sync {
    fn units(&self) -> usize;

    fn subset(&self, indices: &[usize]) -> Self;
}

impl Resample for Dataset {
    fn units(&self) -> usize {
        self.len()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let trajs = self.trajectories();
        self.with_trajectories(indices.iter().map(|&i| trajs[i].clone()).collect())
    }
}

impl Resample for BanditDataset {
    fn units(&self) -> usize {
        self.len()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let samples = self.samples();
        self.with_samples(indices.iter().map(|&i| samples[i].clone()).collect())
    }
}

/// `n1` indices drawn uniformly with replacement from `0..n`.
pub fn resample_indices(n: usize, n1: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, &[]);
    (0..n1).map(|_| rng.random_range(0..n)).collect()
}

pub fn resample<D: Resample>(data: &D, n1: usize, seed: u64) -> D {
    data.subset(&resample_indices(data.units(), n1.max(1), seed))
}

/// Every ordered `n1`-tuple of indices into `0..n`; as a resample list it
/// reproduces the bootstrap expectation exactly.
pub fn all_resamples(n: usize, n1: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n1 {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |i| {
                    let mut next = prefix.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
    }
    out
}

// ── Reports ─────────────────────────────────────────────────────────────

/// One estimator's full-data point and its bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport<T = f64> {
    pub estimator_id: String,
    pub point: T,
    pub replicates: Vec<T>,
    /// Replicates replaced by `point` because the estimator failed.
    pub fallbacks: usize,
}

impl<T: Scalar> EstimatorReport<T> {
    /// Converts to another precision.
    pub fn cast<U: Scalar>(&self) -> EstimatorReport<U> {
        EstimatorReport {
            estimator_id: self.estimator_id.clone(),
            point: U::lit(self.point.as_f64()),
            replicates: self.replicates.iter().map(|r| U::lit(r.as_f64())).collect(),
            fallbacks: self.fallbacks,
        }
    }

    /// Divides point and replicates by `v_max`.
    pub fn normalized(&self, v_max: T) -> Self {
        Self {
            estimator_id: self.estimator_id.clone(),
            point: self.point / v_max,
            replicates: self.replicates.iter().map(|&r| r / v_max).collect(),
            fallbacks: self.fallbacks,
        }
    }
}

/// Runs every estimator on the full data and on the given resamples.
/// `resamples[j]` lists the unit indices of resample `j`.
pub fn collect_reports_on<P, D>(
    estimators: &[Box<dyn OpeEstimator<P, D>>],
    policy: &P,
    data: &D,
    resamples: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<EstimatorReport>, BootstrapError>
where
    P: Sync + ?Sized,
    D: Resample,
{
    let points = estimators
        .iter()
        .map(|e| {
            e.estimate(policy, data, derive_seed(seed, &[POINT_STREAM]))
                .map_err(|source| BootstrapError::PointFailed { id: e.id(), source })
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let rows: Vec<Vec<Option<f64>>> = resamples
        .par_iter()
        .enumerate()
        .map(|(j, idx)| {
            let sub = data.subset(idx);
            estimators
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    e.estimate(policy, &sub, derive_seed(seed, &[j as u64, i as u64]))
                        .ok()
                        .filter(|v| v.is_finite())
                })
                .collect()
        })
        .collect();

    let b = resamples.len();
    estimators
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut fallbacks = 0;
            let replicates = rows
                .iter()
                .map(|row| {
                    row[i].unwrap_or_else(|| {
                        fallbacks += 1;
                        points[i]
                    })
                })
                .collect();
            if fallbacks as f64 > MAX_FALLBACK_RATE * b as f64 {
                return Err(BootstrapError::Unstable { id: e.id(), fallbacks, resamples: b });
            }
            Ok(EstimatorReport { estimator_id: e.id(), point: points[i], replicates, fallbacks })
        })
        .collect()
}

/// Bootstrap reports on `plan.resamples` shared subsamples.
pub fn collect_reports<P, D>(
    estimators: &[Box<dyn OpeEstimator<P, D>>],
    policy: &P,
    data: &D,
    plan: &BootstrapPlan,
) -> Result<Vec<EstimatorReport>, BootstrapError>
where
    P: Sync + ?Sized,
    D: Resample,
{
    plan.validate()?;
    let n = data.units();
    let n1 = plan.subsample_size(n);
    let resamples: Vec<Vec<usize>> =
        (0..plan.resamples as u64).map(|j| resample_indices(n, n1, derive_seed(plan.seed, &[j]))).collect();
    collect_reports_on(estimators, policy, data, &resamples, plan.seed)
}

// ── Error matrix ────────────────────────────────────────────────────────

/// Bootstrap estimate of the estimators' joint error second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix<T = f64> {
    pub a_hat: Matrix<T>,
    pub estimator_ids: Vec<String>,
    pub plan: BootstrapPlan,
    pub n: usize,
    pub subsample_size: usize,
    /// The `n1 / n` factor.
    pub scale_applied: T,
}

impl<T: Scalar> ErrorMatrix<T> {
    pub fn k(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> =
            self.a_hat.to_rows().iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect();
        json!({
            "estimator_ids": self.estimator_ids,
            "a_hat": rows,
            "resamples": self.plan.resamples,
            "n": self.n,
            "subsample_size": self.subsample_size,
            "eta": self.plan.eta,
            "seed": self.plan.seed,
            "centering": self.plan.centering,
            "scale_applied": self.scale_applied.as_f64(),
        })
    }
}

fn check_reports<T: Scalar>(reports: &[EstimatorReport<T>]) -> Result<usize, BootstrapError> {
    let first = reports.first().ok_or(BootstrapError::Empty)?;
    let b = first.replicates.len();
    if let Some(r) = reports.iter().find(|r| r.replicates.len() != b) {
        return Err(BootstrapError::MismatchedResamples { expected: b, found: r.replicates.len() });
    }
    if b == 0 {
        return Err(BootstrapError::MismatchedResamples { expected: 1, found: 0 });
    }
    Ok(b)
}

fn centers<T: Scalar>(reports: &[EstimatorReport<T>], centering: &Centering) -> Result<Vec<T>, BootstrapError> {
    match centering {
        Centering::SelfPoint => Ok(reports.iter().map(|r| r.point).collect()),
        Centering::Consistent(id) => {
            let c = reports
                .iter()
                .find(|r| &r.estimator_id == id)
                .ok_or_else(|| BootstrapError::MissingCenter(id.clone()))?
                .point;
            Ok(vec![c; reports.len()])
        }
    }
}

/// Error matrix with an explicit center per estimator.
pub fn error_matrix_with_centers<T: Scalar>(reports: &[EstimatorReport<T>], centers: &[T], scale: T) -> Matrix<T> {
    let k = reports.len();
    let b = reports[0].replicates.len();
    let mut a = Matrix::<T>::zeros(k, k);
    let mut delta = vec![T::zero(); k];
    for j in 0..b {
        for (i, r) in reports.iter().enumerate() {
            delta[i] = r.replicates[j] - centers[i];
        }
        for i in 0..k {
            for l in i..k {
                a[(i, l)] += delta[i] * delta[l];
            }
        }
    }
    let factor = scale / T::from_usize_lossy(b);
    Matrix::from_fn(k, k, |i, l| if i <= l { a[(i, l)] * factor } else { a[(l, i)] * factor })
}

pub fn build_error_matrix<T: Scalar>(
    reports: &[EstimatorReport<T>],
    plan: &BootstrapPlan,
    n: usize,
) -> Result<ErrorMatrix<T>, BootstrapError> {
    check_reports(reports)?;
    let centers = centers(reports, &plan.centering)?;
    let scale = plan.scale::<T>(n);
    Ok(ErrorMatrix {
        a_hat: error_matrix_with_centers(reports, &centers, scale),
        estimator_ids: reports.iter().map(|r| r.estimator_id.clone()).collect(),
        plan: plan.clone(),
        n,
        subsample_size: plan.subsample_size(n),
        scale_applied: scale,
    })
}

/// Bootstrap MSE of one estimator, centered at its own point.
pub fn mse_hat<T: Scalar>(report: &EstimatorReport<T>, plan: &BootstrapPlan, n: usize) -> T {
    let b = T::from_usize_lossy(report.replicates.len().max(1));
    let sum: T = report.replicates.iter().map(|&r| (r - report.point) * (r - report.point)).sum();
    sum / b * plan.scale::<T>(n)
}

// ── MAGIC-style MSE ─────────────────────────────────────────────────────

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted data.
pub fn percentile<T: Scalar>(values: &[T], q: f64) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Central 50% percentile interval of the reference replicates.
pub fn half_interval<T: Scalar>(reference_replicates: &[T]) -> (T, T) {
    (percentile(reference_replicates, 0.25), percentile(reference_replicates, 0.75))
}

/// Signed distance from `point` to `[lo, hi]`; zero inside.
pub fn signed_interval_gap<T: Scalar>(point: T, (lo, hi): (T, T)) -> T {
    if point < lo {
        point - lo
    } else if point > hi {
        point - hi
    } else {
        T::zero()
    }
}

fn sample_covariance<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = x.len();
    if n < 2 {
        return T::zero();
    }
    let nn = T::from_usize_lossy(n);
    let mx = x.iter().copied().sum::<T>() / nn;
    let my = y.iter().copied().sum::<T>() / nn;
    x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum::<T>() / T::from_usize_lossy(n - 1)
}

/// Squared gap to the reference's 50% interval plus the sample variance of
/// the estimator's replicates rescaled by `scale` (`n1 / n`).
pub fn magic_mse_hat<T: Scalar>(point: T, reference_replicates: &[T], estimator_replicates: &[T], scale: T) -> T {
    let gap = signed_interval_gap(point, half_interval(reference_replicates));
    gap * gap + sample_covariance(estimator_replicates, estimator_replicates) * scale
}

/// Surrogate error matrix: outer product of signed interval gaps plus the
/// rescaled replicate covariance. Its diagonal is [`magic_mse_hat`].
pub fn magic_error_matrix<T: Scalar>(reports: &[EstimatorReport<T>], reference_replicates: &[T], scale: T) -> Matrix<T> {
    let interval = half_interval(reference_replicates);
    let gaps: Vec<T> = reports.iter().map(|r| signed_interval_gap(r.point, interval)).collect();
    let k = reports.len();
    let mut cov = Matrix::zeros(k, k);
    for i in 0..k {
        for l in i..k {
            let c = sample_covariance(&reports[i].replicates, &reports[l].replicates);
            cov[(i, l)] = c;
            cov[(l, i)] = c;
        }
    }
    Matrix::from_fn(k, k, |i, l| gaps[i] * gaps[l] + cov[(i, l)] * scale)
}

// ── Export ──────────────────────────────────────────────────────────────

/// Replicates as CSV: one row per estimator, one column per resample.
pub fn replicates_csv<T: Scalar>(reports: &[EstimatorReport<T>]) -> String {
    let b = reports.first().map_or(0, |r| r.replicates.len());
    let mut out = String::from("estimator");
    for j in 0..b {
        out.push_str(&format!(",r{j}"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.estimator_id);
        for v in &r.replicates {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
