//! Weight solver and ensemble scorers.
//!
//! The weights minimize `alpha^T A alpha` subject to `sum(alpha) = 1` with
//! free signs, solved through the KKT system
//! `[[2A, 1], [1^T, 0]] [alpha; lambda] = [0; 1]`. The matrix is divided by
//! its mean diagonal before solving so the result does not depend on the
//! units of `A`. Ill-conditioned systems are retried with a small ridge
//! proportional to that mean diagonal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{magic_error_matrix, EstimatorReport, ErrorMatrix};
use crate::linalg::{condition_number_1, symmetric_eigenvalues, Lu, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("invalid error matrix: {0}")]
    InvalidErrorMatrix(String),

    #[error("error matrix is singular even after ridge regularization")]
    Singular,

    #[error("{reports} reports but a {k}x{k} error matrix")]
    SizeMismatch { reports: usize, k: usize },

    #[error("no estimators to combine")]
    Empty,
}

/// Relative ridge added to the normalized matrix when the KKT system is
/// ill-conditioned.
pub const RIDGE_FACTOR: f64 = 1e-8;

/// Largest accepted condition number of the normalized KKT matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector<T = f64> {
    pub alpha: Vec<T>,
    /// Ridge added to the diagonal, in the units of the input matrix.
    pub ridge_used: T,
    /// `alpha^T A alpha` on the unregularized matrix.
    pub objective_value: T,
}

fn validate<T: Scalar>(a: &Matrix<T>) -> Result<(), AggregateError> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(AggregateError::InvalidErrorMatrix(format!("shape {}x{}", a.nrows(), a.ncols())));
    }
    if !a.is_finite() {
        return Err(AggregateError::InvalidErrorMatrix("non-finite entry".into()));
    }
    let size = T::one().max(a.max_abs());
    if a.asymmetry() > T::tolerance(1e-12) * size {
        return Err(AggregateError::InvalidErrorMatrix("not symmetric".into()));
    }
    let min_eig = symmetric_eigenvalues(a)[0];
    if min_eig < -(T::tolerance(1e-10) * size) {
        return Err(AggregateError::InvalidErrorMatrix(format!("not positive semidefinite (eigenvalue {min_eig})")));
    }
    Ok(())
}

fn kkt<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let k = a.nrows();
    Matrix::from_fn(k + 1, k + 1, |i, j| match (i < k, j < k) {
        (true, true) => a[(i, j)] + a[(i, j)],
        (false, false) => T::zero(),
        _ => T::one(),
    })
}

fn solve_kkt<T: Scalar>(a: &Matrix<T>, max_condition: T) -> Option<Vec<T>> {
    let system = kkt(a);
    if !(condition_number_1(&system) <= max_condition) {
        return None;
    }
    let lu = Lu::factor(&system)?;
    let mut rhs = vec![T::zero(); a.nrows() + 1];
    rhs[a.nrows()] = T::one();
    let mut x = lu.solve(&rhs);
    x.truncate(a.nrows());
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimizes `alpha^T A alpha` subject to `sum(alpha) = 1`.
pub fn solve_weights<T: Scalar>(a: &Matrix<T>) -> Result<WeightVector<T>, AggregateError> {
    validate(a)?;
    let k = a.nrows();
    if k == 1 {
        return Ok(WeightVector { alpha: vec![T::one()], ridge_used: T::zero(), objective_value: a[(0, 0)] });
    }
    let mean_diag = a.trace() / T::from_usize_lossy(k);
    let unit = if mean_diag > T::zero() { mean_diag } else { T::one() };
    let normalized = if mean_diag > T::zero() { a.scaled(T::one() / unit) } else { a.clone() };

    // Precision-aware thresholds: the f64 values are the defaults, f32 gets
    // looser ones so the same logic stays meaningful.
    let max_condition = T::lit(MAX_CONDITION).min(T::lit(0.01) / T::epsilon());
    let ridge = T::lit(RIDGE_FACTOR).max(T::epsilon() * T::lit(100.0));

    let (alpha, ridge_used) = match solve_kkt(&normalized, max_condition) {
        Some(x) => (x, T::zero()),
        None => {
            let x = solve_kkt(&normalized.with_added_diagonal(ridge), T::infinity()).ok_or(AggregateError::Singular)?;
            (x, ridge * unit)
        }
    };
    Ok(WeightVector { objective_value: a.quadratic_form(&alpha), alpha, ridge_used })
}

// ── Ensemble scores ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Opera,
    OperaIs,
    OperaMagic,
    BestOpe,
    AvgOpe,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Opera, Method::OperaIs, Method::OperaMagic, Method::BestOpe, Method::AvgOpe];

    pub fn name(self) -> &'static str {
        match self {
            Method::Opera => "opera",
            Method::OperaIs => "opera_is",
            Method::OperaMagic => "opera_magic",
            Method::BestOpe => "best_ope",
            Method::AvgOpe => "avg_ope",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScore<T = f64> {
    pub method: Method,
    pub value: T,
    /// Combination weights; one-hot for `best_ope`, uniform for `avg_ope`.
    pub weights: Vec<T>,
    pub ridge_used: T,
    pub estimator_ids: Vec<String>,
    pub points: Vec<T>,
    pub mse_hat_diagonal: Vec<T>,
    /// Index of the chosen estimator for `best_ope`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
}

impl<T: Scalar> EnsembleScore<T> {
    /// Undoes a `1 / v_max` normalization of the inputs.
    pub fn denormalized(mut self, v_max: T) -> Self {
        self.value = self.value * v_max;
        self.points.iter_mut().for_each(|p| *p = *p * v_max);
        self.mse_hat_diagonal.iter_mut().for_each(|d| *d = *d * v_max * v_max);
        self.ridge_used = self.ridge_used * v_max * v_max;
        self
    }
}

fn check_sizes<T: Scalar>(reports: &[EstimatorReport<T>], a: &Matrix<T>) -> Result<(), AggregateError> {
    if reports.is_empty() {
        return Err(AggregateError::Empty);
    }
    if reports.len() != a.nrows() {
        return Err(AggregateError::SizeMismatch { reports: reports.len(), k: a.nrows() });
    }
    Ok(())
}

fn weighted_score<T: Scalar>(
    method: Method,
    reports: &[EstimatorReport<T>],
    a: &Matrix<T>,
) -> Result<EnsembleScore<T>, AggregateError> {
    check_sizes(reports, a)?;
    let w = solve_weights(a)?;
    let points: Vec<T> = reports.iter().map(|r| r.point).collect();
    Ok(EnsembleScore {
        method,
        value: w.alpha.iter().zip(&points).map(|(&x, &p)| x * p).sum(),
        weights: w.alpha,
        ridge_used: w.ridge_used,
        estimator_ids: reports.iter().map(|r| r.estimator_id.clone()).collect(),
        points,
        mse_hat_diagonal: a.diagonal(),
        selected: None,
    })
}

/// `sum_i alpha_i * point_i` with weights from the error matrix.
pub fn opera_score<T: Scalar>(reports: &[EstimatorReport<T>], a_hat: &ErrorMatrix<T>) -> Result<EnsembleScore<T>, AggregateError> {
    weighted_score(Method::Opera, reports, &a_hat.a_hat)
}

/// OPERA on an error matrix centered at a consistent estimator's point.
pub fn opera_is_score<T: Scalar>(reports: &[EstimatorReport<T>], a_hat: &ErrorMatrix<T>) -> Result<EnsembleScore<T>, AggregateError> {
    weighted_score(Method::OperaIs, reports, &a_hat.a_hat)
}

/// OPERA on the MAGIC-style surrogate matrix built from a WIS reference.
pub fn opera_magic_score<T: Scalar>(
    reports: &[EstimatorReport<T>],
    wis_replicates: &[T],
    scale: T,
) -> Result<EnsembleScore<T>, AggregateError> {
    if reports.is_empty() || wis_replicates.is_empty() {
        return Err(AggregateError::Empty);
    }
    weighted_score(Method::OperaMagic, reports, &magic_error_matrix(reports, wis_replicates, scale))
}

/// Point of the estimator with the smallest diagonal entry; ties go to the
/// lowest index.
pub fn best_ope_score<T: Scalar>(reports: &[EstimatorReport<T>], a_hat: &ErrorMatrix<T>) -> Result<EnsembleScore<T>, AggregateError> {
    check_sizes(reports, &a_hat.a_hat)?;
    let diag = a_hat.a_hat.diagonal();
    let mut best = 0;
    for (i, d) in diag.iter().enumerate() {
        if *d < diag[best] {
            best = i;
        }
    }
    let mut weights = vec![T::zero(); reports.len()];
    weights[best] = T::one();
    Ok(EnsembleScore {
        method: Method::BestOpe,
        value: reports[best].point,
        weights,
        ridge_used: T::zero(),
        estimator_ids: reports.iter().map(|r| r.estimator_id.clone()).collect(),
        points: reports.iter().map(|r| r.point).collect(),
        mse_hat_diagonal: diag,
        selected: Some(best),
    })
}

/// Unweighted mean of the points.
pub fn avg_ope_score<T: Scalar>(reports: &[EstimatorReport<T>]) -> Result<EnsembleScore<T>, AggregateError> {
    if reports.is_empty() {
        return Err(AggregateError::Empty);
    }
    let k = T::from_usize_lossy(reports.len());
    let points: Vec<T> = reports.iter().map(|r| r.point).collect();
    Ok(EnsembleScore {
        method: Method::AvgOpe,
        value: points.iter().copied().sum::<T>() / k,
        weights: vec![T::one() / k; reports.len()],
        ridge_used: T::zero(),
        estimator_ids: reports.iter().map(|r| r.estimator_id.clone()).collect(),
        points,
        mse_hat_diagonal: Vec::new(),
        selected: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::BootstrapPlan;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn reports(points: &[f64]) -> Vec<EstimatorReport> {
        points
            .iter()
            .enumerate()
            .map(|(i, &p)| EstimatorReport { estimator_id: format!("e{i}"), point: p, replicates: vec![p], fallbacks: 0 })
            .collect()
    }

    fn wrap(a: Matrix<f64>) -> ErrorMatrix<f64> {
        let k = a.nrows();
        ErrorMatrix {
            a_hat: a,
            estimator_ids: (0..k).map(|i| format!("e{i}")).collect(),
            plan: BootstrapPlan::default(),
            n: 1,
            subsample_size: 1,
            scale_applied: 1.0,
        }
    }

    #[test]
    fn identity_gives_equal_weights() {
        let w = solve_weights(&Matrix::<f64>::identity(2)).unwrap();
        assert!((w.alpha[0] - 0.5).abs() < 1e-15 && (w.alpha[1] - 0.5).abs() < 1e-15);
        assert_eq!(w.ridge_used, 0.0);
    }

    #[test]
    fn inverse_variance_weights() {
        let w = solve_weights(&Matrix::<f64>::from_diagonal(&[1.0, 4.0])).unwrap();
        assert!((w.alpha[0] - 0.8).abs() < 1e-12);
        assert!((w.alpha[1] - 0.2).abs() < 1e-12);
        assert!((w.objective_value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn same_sign_biases_cancel() {
        // Singular, but positive definite on the constraint plane.
        let w = solve_weights(&m(&[&[1.0, 2.0], &[2.0, 4.0]])).unwrap();
        assert!((w.alpha[0] - 2.0).abs() < 1e-9 && (w.alpha[1] + 1.0).abs() < 1e-9, "{:?}", w.alpha);
        assert!(w.objective_value.abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_take_the_ridge_path() {
        let w = solve_weights(&m(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]])).unwrap();
        assert!(w.ridge_used > 0.0);
        assert!((w.alpha[0] - w.alpha[1]).abs() < 1e-9);
        assert!((w.alpha[0] + w.alpha[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_matrix_gives_uniform_weights() {
        let w = solve_weights(&Matrix::<f64>::zeros(3, 3)).unwrap();
        for a in &w.alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(matches!(solve_weights(&m(&[&[1.0, 0.5], &[0.0, 1.0]])), Err(AggregateError::InvalidErrorMatrix(_))));
        assert!(matches!(solve_weights(&m(&[&[1.0, 2.0], &[2.0, 1.0]])), Err(AggregateError::InvalidErrorMatrix(_))));
        let err = solve_weights(&m(&[&[-1.0]])).unwrap_err();
        assert!(err.to_string().starts_with("invalid error matrix"));
    }

    #[test]
    fn single_precision_solver() {
        let w = solve_weights(&Matrix::<f32>::from_diagonal(&[1.0, 4.0])).unwrap();
        assert!((w.alpha[0] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn scores_follow_weights() {
        let r = reports(&[1.0, 2.0]);
        let s = opera_score(&r, &wrap(Matrix::from_diagonal(&[1.0, 4.0]))).unwrap();
        assert!((s.value - 1.2).abs() < 1e-12);
        let one = opera_score(&reports(&[3.5]), &wrap(m(&[&[2.0]]))).unwrap();
        assert_eq!(one.value, 3.5);
        let avg = avg_ope_score(&reports(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(avg.value, 2.0);
        let eq = opera_score(&r, &wrap(Matrix::identity(2))).unwrap();
        assert!((eq.value - avg_ope_score(&r).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn best_ope_argmin_and_ties() {
        let r = reports(&[1.0, 2.0, 3.0]);
        let s = best_ope_score(&r, &wrap(Matrix::from_diagonal(&[0.3, 0.1, 0.2]))).unwrap();
        assert_eq!((s.value, s.selected), (2.0, Some(1)));
        assert_eq!(s.weights, vec![0.0, 1.0, 0.0]);
        let tie = best_ope_score(&r, &wrap(Matrix::identity(3))).unwrap();
        assert_eq!(tie.selected, Some(0));
    }

    #[test]
    fn magic_with_all_points_inside_is_uniform() {
        let r = reports(&[0.4, 0.5, 0.6]);
        let s = opera_magic_score(&r, &[0.0, 0.5, 1.0], 1.0).unwrap();
        for w in &s.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn magic_downweights_far_estimator() {
        let mut r = reports(&[0.5, 0.5, 10.0]);
        r[0].replicates = vec![0.4, 0.6, 0.5, 0.45];
        r[1].replicates = vec![0.6, 0.4, 0.55, 0.5];
        r[2].replicates = vec![10.0, 10.1, 9.9, 10.0];
        let s = opera_magic_score(&r, &[0.3, 0.5, 0.7, 0.5], 0.5).unwrap();
        assert!(s.weights[2].abs() < 1.0 / 3.0, "{:?}", s.weights);
    }

    #[test]
    fn denormalization_scales_value() {
        let s = avg_ope_score(&reports(&[0.5, 0.25])).unwrap().denormalized(4.0);
        assert_eq!(s.value, 1.5);
        assert_eq!(s.points, vec![2.0, 1.0]);
    }
}
