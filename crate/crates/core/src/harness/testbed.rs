//! Synthetic Gaussian testbed with a known error matrix.
//!
//! Estimates are drawn as `truth + bias + L z` with `L L^T` the configured
//! covariance, so the true error matrix is `Cov + bias bias^T`. Weights are
//! solved from that analytic matrix and from a Monte-Carlo estimate of it,
//! and every estimator and combination is scored over independent draws.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::{solve_weights, WeightVector};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::mdp::mean_and_stderr;
use crate::rng::stream;

use super::table::{number, Table};
use super::HarnessError;

fn default_trials() -> usize {
    10_000
}

fn default_estimation_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianTestbedConfig {
    pub biases: Vec<f64>,
    pub variances: Vec<f64>,
    /// Full correlation matrix; independent estimators when absent.
    #[serde(default)]
    pub correlations: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub true_value: f64,
    /// Draws used to score estimators and combinations.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Draws used to estimate the error matrix for the simulated weights.
    #[serde(default = "default_estimation_draws")]
    pub estimation_draws: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GaussianTestbedConfig {
    pub fn k(&self) -> usize {
        self.biases.len()
    }

    pub fn covariance(&self) -> Result<Matrix<f64>, HarnessError> {
        let k = self.k();
        if k == 0 || self.variances.len() != k {
            return Err(HarnessError::Config("biases and variances must be nonempty and of equal length".into()));
        }
        if self.variances.iter().any(|v| !(*v >= 0.0)) {
            return Err(HarnessError::Config("variances must be nonnegative".into()));
        }
        let sd: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        let corr = match &self.correlations {
            None => Matrix::identity(k),
            Some(rows) => Matrix::from_rows(rows)
                .filter(|m| m.nrows() == k && m.ncols() == k)
                .ok_or_else(|| HarnessError::Config(format!("correlations must be {k}x{k}")))?,
        };
        let cov = Matrix::from_fn(k, k, |i, j| corr[(i, j)] * sd[i] * sd[j]);
        let size = cov.max_abs().max(1.0);
        if cov.asymmetry() > 1e-12 * size || symmetric_eigenvalues(&cov)[0] < -1e-10 * size {
            return Err(HarnessError::Config("covariance matrix is not symmetric positive semidefinite".into()));
        }
        Ok(cov)
    }

    /// `Cov + bias bias^T`.
    pub fn analytic_error_matrix(&self) -> Result<Matrix<f64>, HarnessError> {
        let cov = self.covariance()?;
        Ok(Matrix::from_fn(self.k(), self.k(), |i, j| cov[(i, j)] + self.biases[i] * self.biases[j]))
    }
}

/// Lower factor `L` with `L L^T = a` for a PSD `a`; directions with
/// (numerically) zero variance get zero columns.
fn psd_factor(a: &Matrix<f64>) -> Matrix<f64> {
    let k = a.nrows();
    let floor = 1e-14 * a.diagonal().iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(k, k);
    for j in 0..k {
        let d = a[(j, j)] - (0..j).map(|p| l[(j, p)] * l[(j, p)]).sum::<f64>();
        if d <= floor {
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in j + 1..k {
            let s = a[(i, j)] - (0..j).map(|p| l[(i, p)] * l[(j, p)]).sum::<f64>();
            l[(i, j)] = s / root;
        }
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mse: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedReport {
    pub analytic_a: Vec<Vec<f64>>,
    pub analytic_weights: WeightVector,
    pub simulated_a: Vec<Vec<f64>>,
    pub simulated_weights: WeightVector,
    pub estimator_mse: Vec<MseEstimate>,
    /// Combination with weights from the analytic matrix.
    pub analytic_combination: MseEstimate,
    /// Combination with weights from the simulated matrix.
    pub simulated_combination: MseEstimate,
}

impl TestbedReport {
    pub fn best_single(&self) -> &MseEstimate {
        self.estimator_mse
            .iter()
            .min_by(|a, b| a.mse.partial_cmp(&b.mse).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one estimator")
    }

    pub fn table(&self, config: &GaussianTestbedConfig) -> Table {
        let mut t = Table::new(&["estimator", "bias", "variance", "analytic_weight", "simulated_weight", "mse", "stderr"]);
        for i in 0..self.estimator_mse.len() {
            t.push(vec![
                json!(format!("estimator_{i}")),
                number(config.biases[i]),
                number(config.variances[i]),
                number(self.analytic_weights.alpha[i]),
                number(self.simulated_weights.alpha[i]),
                number(self.estimator_mse[i].mse),
                number(self.estimator_mse[i].stderr),
            ]);
        }
        for (name, m) in [("analytic_combination", &self.analytic_combination), ("simulated_combination", &self.simulated_combination)] {
            t.push(vec![json!(name), json!(null), json!(null), json!(null), json!(null), number(m.mse), number(m.stderr)]);
        }
        t
    }
}

fn draw(truth: f64, biases: &[f64], factor: &Matrix<f64>, seed: u64, path: &[u64]) -> Vec<f64> {
    let mut rng = stream(seed, path);
    let z: Vec<f64> = (0..biases.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise = factor.mul_vec(&z);
    biases.iter().zip(noise).map(|(b, e)| truth + b + e).collect()
}

fn mse_of(errors: &[f64]) -> MseEstimate {
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let (mse, stderr) = mean_and_stderr(&sq);
    MseEstimate { mse, stderr }
}

pub fn run_gaussian_testbed(config: &GaussianTestbedConfig) -> Result<TestbedReport, HarnessError> {
    if config.trials == 0 || config.estimation_draws == 0 {
        return Err(HarnessError::Config("trials and estimation_draws must be positive".into()));
    }
    let k = config.k();
    let analytic = config.analytic_error_matrix()?;
    let factor = psd_factor(&config.covariance()?);
    let truth = config.true_value;

    let estimation: Vec<Vec<f64>> = (0..config.estimation_draws as u64)
        .into_par_iter()
        .map(|t| draw(truth, &config.biases, &factor, config.seed, &[1, t]))
        .collect();
    let mut simulated = Matrix::zeros(k, k);
    for x in &estimation {
        let sim = Matrix::from_fn(k, k, |i, j| (x[i] - truth) * (x[j] - truth));
        simulated = Matrix::from_fn(k, k, |i, j| simulated[(i, j)] + sim[(i, j)]);
    }
    let simulated = simulated.scaled(1.0 / config.estimation_draws as f64);

    let err = |e: crate::aggregate::AggregateError| HarnessError::Estimator(e.to_string());
    let analytic_weights = solve_weights(&analytic).map_err(err)?;
    let simulated_weights = solve_weights(&simulated).map_err(err)?;

    let draws: Vec<Vec<f64>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| draw(truth, &config.biases, &factor, config.seed, &[0, t]))
        .collect();
    let estimator_mse = (0..k).map(|i| mse_of(&draws.iter().map(|x| x[i] - truth).collect::<Vec<_>>())).collect();
    let combine = |w: &[f64]| -> Vec<f64> {
        draws.iter().map(|x| x.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() - truth).collect()
    };
    Ok(TestbedReport {
        analytic_a: analytic.to_rows(),
        simulated_a: simulated.to_rows(),
        estimator_mse,
        analytic_combination: mse_of(&combine(&analytic_weights.alpha)),
        simulated_combination: mse_of(&combine(&simulated_weights.alpha)),
        analytic_weights,
        simulated_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(biases: &[f64], variances: &[f64]) -> GaussianTestbedConfig {
        GaussianTestbedConfig {
            biases: biases.to_vec(),
            variances: variances.to_vec(),
            correlations: None,
            true_value: 0.0,
            trials: 2000,
            estimation_draws: 200,
            seed: 1,
        }
    }

    #[test]
    fn unbiased_inverse_variance_weights() {
        let r = run_gaussian_testbed(&cfg(&[0.0, 0.0], &[1.0, 4.0])).unwrap();
        assert!((r.analytic_weights.alpha[0] - 0.8).abs() < 1e-12);
        assert!(r.analytic_combination.mse < r.best_single().mse + 4.0 * r.analytic_combination.stderr);
    }

    #[test]
    fn opposite_biases_are_symmetric() {
        let r = run_gaussian_testbed(&cfg(&[0.5, -0.5], &[1.0, 1.0])).unwrap();
        assert!((r.analytic_weights.alpha[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn same_sign_biases_cancel_when_noise_vanishes() {
        let r = run_gaussian_testbed(&cfg(&[1.0, 2.0], &[0.0, 0.0])).unwrap();
        assert!((r.analytic_weights.alpha[0] - 2.0).abs() < 1e-9);
        assert!((r.analytic_weights.alpha[1] + 1.0).abs() < 1e-9);
        assert!(r.analytic_combination.mse < 1e-12);
    }

    #[test]
    fn rejects_indefinite_correlations() {
        let mut c = cfg(&[0.0, 0.0], &[1.0, 1.0]);
        c.correlations = Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(run_gaussian_testbed(&c).is_err());
    }

    #[test]
    fn psd_factor_handles_zero_variance() {
        let a = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let l = psd_factor(&a);
        assert_eq!(l.matmul(&l.transpose()), a);
    }
}
