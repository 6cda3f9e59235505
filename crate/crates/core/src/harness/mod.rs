//! Experiment driver: config-driven multi-trial studies that score every
//! estimator and ensemble method against ground truth.
//!
//! Each `(policy, n, trial)` cell draws its dataset and bootstrap resamples
//! from seeds derived from `(master, policy, n, trial, stage)`, so results do
//! not depend on how work is scheduled across threads.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::aggregate::{avg_ope_score, best_ope_score, opera_magic_score, solve_weights, Method};
use crate::bootstrap::{
    build_error_matrix, collect_reports, error_matrix_with_centers, BootstrapPlan, EstimatorReport, Resample,
};
use crate::envs::bandit::{build_bandit, BanditConfig, BanditPolicy, BanditPolicyKind, BanditProblem};
use crate::envs::graph::{build_graph, GraphConfig};
use crate::envs::policies::{noised_policy, optimal_policy};
use crate::envs::sepsis::{build_sepsis, SepsisConfig};
use crate::estimators::{bandit_estimators, tabular_estimator, EstimatorSpec, OpeEstimator};
use crate::mdp::{mean_and_stderr, rollout, true_value_dp, TabularMdp, TabularPolicy};
use crate::rng::derive_seed;

pub mod table;
pub mod testbed;

pub use table::{number, Format, Table};
pub use testbed::{run_gaussian_testbed, GaussianTestbedConfig, TestbedReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("estimator failure: {0}")]
    Estimator(String),
}

impl HarnessError {
    fn config(msg: impl std::fmt::Display) -> Self {
        Self::Config(msg.to_string())
    }
}

// ── Configuration ───────────────────────────────────────────────────────

/// Environment id plus its builder configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub id: String,
    #[serde(default)]
    pub config: Value,
}

/// A built environment.
#[derive(Debug, Clone)]
pub enum Environment {
    Tabular { id: String, mdp: TabularMdp, default_v_max: f64 },
    Bandit(BanditProblem),
}

fn env_section<T: serde::de::DeserializeOwned + Default>(value: &Value) -> Result<T, HarnessError> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(HarnessError::config)
}

impl EnvironmentConfig {
    pub fn builtin(id: &str) -> Self {
        Self { id: id.into(), config: Value::Null }
    }

    pub fn build(&self) -> Result<Environment, HarnessError> {
        match self.id.as_str() {
            "graph" => {
                let cfg: GraphConfig = env_section(&self.config)?;
                let mdp = build_graph(&cfg).map_err(HarnessError::config)?;
                Ok(Environment::Tabular { id: self.id.clone(), mdp, default_v_max: cfg.v_max() })
            }
            "sepsis" => {
                let cfg: SepsisConfig = env_section(&self.config)?;
                let mdp = build_sepsis(&cfg).map_err(HarnessError::config)?;
                Ok(Environment::Tabular { id: self.id.clone(), mdp, default_v_max: 1.0 })
            }
            "bandit" => {
                let cfg: BanditConfig = env_section(&self.config)?;
                Ok(Environment::Bandit(build_bandit(&cfg).map_err(HarnessError::config)?))
            }
            other => Err(HarnessError::config(format!("unknown environment id `{other}`"))),
        }
    }
}

/// Where a policy starts before epsilon-noising.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyBase {
    Optimal,
    Uniform,
    /// Explicit probability table (tabular environments only).
    Table(TabularPolicy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default)]
    pub name: Option<String>,
    pub base: PolicyBase,
    #[serde(default)]
    pub epsilon: f64,
}

impl PolicySpec {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let base = match &self.base {
                PolicyBase::Optimal => "optimal",
                PolicyBase::Uniform => "uniform",
                PolicyBase::Table(_) => "table",
            };
            if self.epsilon == 0.0 {
                base.to_string()
            } else {
                format!("{base}-eps{}", self.epsilon)
            }
        })
    }

    pub fn tabular(&self, mdp: &TabularMdp) -> Result<TabularPolicy, HarnessError> {
        let base = match &self.base {
            PolicyBase::Optimal => optimal_policy(mdp).map_err(HarnessError::config)?,
            PolicyBase::Uniform => TabularPolicy::uniform(mdp.num_observations(), mdp.num_actions()),
            PolicyBase::Table(t) => t.clone(),
        };
        if base.num_observations() != mdp.num_observations() || base.num_actions() != mdp.num_actions() {
            return Err(HarnessError::config(format!("policy `{}` does not match the environment's shape", self.label())));
        }
        noised_policy(&base, self.epsilon).map_err(HarnessError::config)
    }

    pub fn bandit(&self, problem: &BanditProblem) -> Result<BanditPolicy, HarnessError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(HarnessError::config(format!("policy `{}`: epsilon outside [0, 1]", self.label())));
        }
        match self.base {
            PolicyBase::Optimal => Ok(problem.policy(BanditPolicyKind::Greedy { epsilon: self.epsilon })),
            PolicyBase::Uniform => Ok(problem.policy(BanditPolicyKind::Uniform)),
            PolicyBase::Table(_) => Err(HarnessError::config("bandit policies cannot be tables")),
        }
    }
}

fn default_trials() -> usize {
    10
}

fn default_consistent() -> String {
    "is".into()
}

fn default_magic_reference() -> String {
    "wis".into()
}

fn default_truth_episodes() -> usize {
    1_000_000
}

fn default_methods() -> Vec<Method> {
    vec![Method::Opera, Method::BestOpe, Method::AvgOpe]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    /// Logging policy. Required for tabular environments; bandits default to
    /// their built-in softmax logger.
    #[serde(default)]
    pub behavior: Option<PolicySpec>,
    pub evaluation_policies: Vec<PolicySpec>,
    pub dataset_sizes: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub bootstrap: BootstrapPlan,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Center of the OPERA-IS error matrix.
    #[serde(default = "default_consistent")]
    pub consistent_estimator: String,
    /// Estimator whose replicates define the OPERA-MAGIC interval.
    #[serde(default = "default_magic_reference")]
    pub magic_reference: String,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Normalizer for estimates; defaults per environment.
    #[serde(default)]
    pub v_max: Option<f64>,
    /// Monte-Carlo contexts for bandit ground truth.
    #[serde(default = "default_truth_episodes")]
    pub truth_episodes: usize,
}

impl ExperimentConfig {
    /// Reads JSON or TOML, chosen by extension (JSON first when unknown).
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        load_config(path)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::config("trials must be at least 1"));
        }
        if self.dataset_sizes.is_empty() || self.dataset_sizes.contains(&0) {
            return Err(HarnessError::config("dataset_sizes must be nonempty and positive"));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::config("methods must be nonempty"));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::config("estimators must be nonempty"));
        }
        if self.evaluation_policies.is_empty() {
            return Err(HarnessError::config("evaluation_policies must be nonempty"));
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::config("v_max must be positive"));
            }
        }
        self.bootstrap.validate().map_err(HarnessError::config)
    }
}

/// Deserializes a JSON or TOML file.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

// ── Results ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy: usize,
    pub n: usize,
    pub trial: usize,
    pub truth: f64,
    /// Full-data estimates, aligned with the experiment's estimator ids.
    pub estimator_points: Vec<f64>,
    /// Bootstrap MSE estimates (self-centered diagonal).
    pub estimator_mse_hat: Vec<f64>,
    /// Method estimates, aligned with the experiment's methods.
    pub method_values: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub env: String,
    pub policy: String,
    pub n: usize,
    pub method: String,
    pub mse: f64,
    pub rmse: f64,
    pub stderr: f64,
    pub trials: usize,
    pub failures: usize,
    pub truth_stderr: f64,
}

pub const TABLE_COLUMNS: [&str; 10] =
    ["env", "policy", "n", "method", "mse", "rmse", "stderr", "trials", "failures", "truth_stderr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub env: String,
    pub policy_names: Vec<String>,
    /// `(value, standard error)`; the error is zero for exact ground truth.
    pub truths: Vec<(f64, f64)>,
    pub estimator_ids: Vec<String>,
    pub methods: Vec<Method>,
    pub trials: Vec<TrialResult>,
    pub rows: Vec<TableRow>,
}

impl ExperimentResults {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&TABLE_COLUMNS);
        for r in &self.rows {
            t.push(vec![
                json!(r.env),
                json!(r.policy),
                json!(r.n),
                json!(r.method),
                number(r.mse),
                number(r.rmse),
                number(r.stderr),
                json!(r.trials),
                json!(r.failures),
                number(r.truth_stderr),
            ]);
        }
        t
    }

    pub fn failed_trials(&self) -> usize {
        self.trials.iter().filter(|t| t.failure.is_some()).count()
    }

    /// Looks up a row by policy label, size and method/estimator name.
    pub fn row(&self, policy: &str, n: usize, method: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.policy == policy && r.n == n && r.method == method)
    }
}

// ── Running ─────────────────────────────────────────────────────────────

const STAGE_DATA: u64 = 0;
const STAGE_BOOTSTRAP: u64 = 1;
const STAGE_TRUTH: u64 = 2;

/// Label for the rows that pool every evaluation policy.
pub const ALL_POLICIES: &str = "all";

/// Main estimators, then auxiliary ones needed only as references.
struct Lineup<P: ?Sized, D> {
    estimators: Vec<Box<dyn OpeEstimator<P, D>>>,
    main: usize,
}

fn lineup<P: ?Sized, D>(
    config: &ExperimentConfig,
    resolve: impl Fn(&EstimatorSpec) -> Result<Vec<Box<dyn OpeEstimator<P, D>>>, HarnessError>,
) -> Result<Lineup<P, D>, HarnessError> {
    let mut estimators = Vec::new();
    for spec in &config.estimators {
        estimators.extend(resolve(spec)?);
    }
    let main = estimators.len();
    let mut ids: Vec<String> = estimators.iter().map(|e| e.id()).collect();
    if let Some(dup) = ids.iter().enumerate().find_map(|(i, id)| ids[..i].contains(id).then_some(id)) {
        return Err(HarnessError::config(format!("estimator `{dup}` listed twice")));
    }
    let mut needed = Vec::new();
    if config.methods.contains(&Method::OperaIs) {
        needed.push(config.consistent_estimator.clone());
    }
    if config.methods.contains(&Method::OperaMagic) {
        needed.push(config.magic_reference.clone());
    }
    for id in needed {
        if !ids.contains(&id) {
            estimators.extend(resolve(&EstimatorSpec::Id(id.clone()))?);
            ids.push(id);
        }
    }
    Ok(Lineup { estimators, main })
}

fn report_index<T>(reports: &[EstimatorReport<T>], id: &str) -> usize {
    reports.iter().position(|r| r.estimator_id == id).expect("lineup includes every reference estimator")
}

#[derive(Clone)]
struct TrialContext<'a> {
    methods: &'a [Method],
    plan: BootstrapPlan,
    main: usize,
    v_max: f64,
    consistent: &'a str,
    magic_reference: &'a str,
}

/// Estimator points, self-centered MSE estimates and method values, all in
/// the original (denormalized) units.
fn score_trial<P, D>(
    ctx: &TrialContext<'_>,
    estimators: &[Box<dyn OpeEstimator<P, D>>],
    policy: &P,
    data: &D,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), String>
where
    P: Sync + ?Sized,
    D: Resample,
{
    let n = data.units();
    let reports = collect_reports(estimators, policy, data, &ctx.plan).map_err(|e| e.to_string())?;
    let normalized: Vec<EstimatorReport> = reports.iter().map(|r| r.normalized(ctx.v_max)).collect();
    let main = &normalized[..ctx.main];
    let a_self = build_error_matrix(main, &ctx.plan, n).map_err(|e| e.to_string())?;
    let scale = ctx.plan.scale::<f64>(n);

    let mut values = Vec::with_capacity(ctx.methods.len());
    for method in ctx.methods {
        let score = match method {
            Method::Opera => solve_weights(&a_self.a_hat)
                .map(|w| w.alpha.iter().zip(main).map(|(a, r)| a * r.point).sum::<f64>()),
            Method::OperaIs => {
                let center = normalized[report_index(&normalized, ctx.consistent)].point;
                let a = error_matrix_with_centers(main, &vec![center; main.len()], scale);
                solve_weights(&a).map(|w| w.alpha.iter().zip(main).map(|(a, r)| a * r.point).sum::<f64>())
            }
            Method::OperaMagic => {
                let wis = &normalized[report_index(&normalized, ctx.magic_reference)].replicates;
                opera_magic_score(main, wis, scale).map(|s| s.value)
            }
            Method::BestOpe => best_ope_score(main, &a_self).map(|s| s.value),
            Method::AvgOpe => avg_ope_score(main).map(|s| s.value),
        }
        .map_err(|e| format!("{method}: {e}"))?;
        values.push(score * ctx.v_max);
    }
    let points = reports[..ctx.main].iter().map(|r| r.point).collect();
    let mse_hat = a_self.a_hat.diagonal().iter().map(|d| d * ctx.v_max * ctx.v_max).collect();
    Ok((points, mse_hat, values))
}

struct Job {
    policy: usize,
    n: usize,
    trial: usize,
}

fn jobs(config: &ExperimentConfig, policies: usize) -> Vec<Job> {
    let mut out = Vec::new();
    for policy in 0..policies {
        for &n in &config.dataset_sizes {
            for trial in 0..config.trials {
                out.push(Job { policy, n, trial });
            }
        }
    }
    out
}

fn trial_plan(config: &ExperimentConfig, job: &Job) -> BootstrapPlan {
    BootstrapPlan {
        seed: derive_seed(config.seed, &[job.policy as u64, job.n as u64, job.trial as u64, STAGE_BOOTSTRAP]),
        ..config.bootstrap.clone()
    }
}

fn data_seed(config: &ExperimentConfig, job: &Job) -> u64 {
    derive_seed(config.seed, &[job.policy as u64, job.n as u64, job.trial as u64, STAGE_DATA])
}

fn trial_result(job: &Job, truth: f64, outcome: Result<(Vec<f64>, Vec<f64>, Vec<f64>), String>) -> TrialResult {
    let (estimator_points, estimator_mse_hat, method_values, failure) = match outcome {
        Ok((p, m, v)) => (p, m, v, None),
        Err(e) => (Vec::new(), Vec::new(), Vec::new(), Some(e)),
    };
    TrialResult {
        policy: job.policy,
        n: job.n,
        trial: job.trial,
        truth,
        estimator_points,
        estimator_mse_hat,
        method_values,
        failure,
    }
}

/// Runs the full study described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults, HarnessError> {
    config.validate()?;
    let env = config.environment.build()?;
    let policy_names: Vec<String> = config.evaluation_policies.iter().map(PolicySpec::label).collect();

    let (truths, trials, estimator_ids) = match &env {
        Environment::Tabular { mdp, default_v_max, .. } => {
            let lineup = lineup(config, |spec| tabular_estimator(spec).map(|e| vec![e]).map_err(HarnessError::config))?;
            let behavior = config
                .behavior
                .as_ref()
                .ok_or_else(|| HarnessError::config("tabular environments need a behavior policy"))?
                .tabular(mdp)?;
            let policies = config.evaluation_policies.iter().map(|p| p.tabular(mdp)).collect::<Result<Vec<_>, _>>()?;
            let truths = policies
                .iter()
                .map(|p| true_value_dp(mdp, p).map(|v| (v, 0.0)).map_err(HarnessError::config))
                .collect::<Result<Vec<_>, _>>()?;
            let ctx = TrialContext {
                methods: &config.methods,
                plan: config.bootstrap.clone(),
                main: lineup.main,
                v_max: config.v_max.unwrap_or(*default_v_max),
                consistent: &config.consistent_estimator,
                magic_reference: &config.magic_reference,
            };
            let trials: Vec<TrialResult> = jobs(config, policies.len())
                .par_iter()
                .map(|job| {
                    let outcome = rollout(mdp, &behavior, job.n, data_seed(config, job))
                        .map_err(|e| e.to_string())
                        .and_then(|data| {
                            let ctx = TrialContext { plan: trial_plan(config, job), ..ctx.clone() };
                            score_trial(&ctx, &lineup.estimators, &policies[job.policy], &data)
                        });
                    trial_result(job, truths[job.policy].0, outcome)
                })
                .collect();
            let ids = lineup.estimators[..lineup.main].iter().map(|e| e.id()).collect();
            (truths, trials, ids)
        }
        Environment::Bandit(problem) => {
            let bandwidths = problem.config().bandwidths.clone();
            let lineup = lineup(config, |spec| bandit_estimators(spec, &bandwidths).map_err(HarnessError::config))?;
            let behavior = match &config.behavior {
                Some(spec) => spec.bandit(problem)?,
                None => problem.behavior(),
            };
            let policies =
                config.evaluation_policies.iter().map(|p| p.bandit(problem)).collect::<Result<Vec<_>, _>>()?;
            let truths: Vec<(f64, f64)> = policies
                .iter()
                .enumerate()
                .map(|(i, p)| problem.true_value(p, config.truth_episodes, derive_seed(config.seed, &[i as u64, STAGE_TRUTH])))
                .collect();
            let ctx = TrialContext {
                methods: &config.methods,
                plan: config.bootstrap.clone(),
                main: lineup.main,
                v_max: config.v_max.unwrap_or_else(|| problem.v_max(10_000)),
                consistent: &config.consistent_estimator,
                magic_reference: &config.magic_reference,
            };
            let trials: Vec<TrialResult> = jobs(config, policies.len())
                .par_iter()
                .map(|job| {
                    let outcome = problem
                        .sample(&behavior, job.n, data_seed(config, job))
                        .map_err(|e| e.to_string())
                        .and_then(|data| {
                            let ctx = TrialContext { plan: trial_plan(config, job), ..ctx.clone() };
                            score_trial(&ctx, &lineup.estimators, &policies[job.policy], &data)
                        });
                    trial_result(job, truths[job.policy].0, outcome)
                })
                .collect();
            let ids = lineup.estimators[..lineup.main].iter().map(|e| e.id()).collect();
            (truths, trials, ids)
        }
    };

    let mut results = ExperimentResults {
        env: config.environment.id.clone(),
        policy_names,
        truths,
        estimator_ids,
        methods: config.methods.clone(),
        trials,
        rows: Vec::new(),
    };
    results.rows = aggregate_rows(&results, &config.dataset_sizes);
    verify_rows(&results)?;
    Ok(results)
}

// ── Aggregation ─────────────────────────────────────────────────────────

/// Column `j` of the combined estimator-then-method values.
fn value_of(t: &TrialResult, j: usize) -> f64 {
    let k = t.estimator_points.len();
    if j < k {
        t.estimator_points[j]
    } else {
        t.method_values[j - k]
    }
}

fn summarize(
    results: &ExperimentResults,
    policy_label: &str,
    n: usize,
    selected: &[&TrialResult],
    truth_stderr: f64,
) -> Vec<TableRow> {
    let names: Vec<String> = results
        .estimator_ids
        .iter()
        .cloned()
        .chain(results.methods.iter().map(|m| m.name().to_string()))
        .collect();
    let ok: Vec<&&TrialResult> = selected.iter().filter(|t| t.failure.is_none()).collect();
    let failures = selected.len() - ok.len();
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let sq: Vec<f64> = ok.iter().map(|t| (value_of(t, j) - t.truth).powi(2)).collect();
            let (mse, stderr) = mean_and_stderr(&sq);
            TableRow {
                env: results.env.clone(),
                policy: policy_label.to_string(),
                n,
                method: name.clone(),
                mse,
                rmse: mse.sqrt(),
                stderr,
                trials: ok.len(),
                failures,
                truth_stderr,
            }
        })
        .collect()
}

fn aggregate_rows(results: &ExperimentResults, sizes: &[usize]) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for &n in sizes {
        for (p, name) in results.policy_names.iter().enumerate() {
            let selected: Vec<&TrialResult> = results.trials.iter().filter(|t| t.policy == p && t.n == n).collect();
            rows.extend(summarize(results, name, n, &selected, results.truths[p].1));
        }
        if results.policy_names.len() > 1 {
            let selected: Vec<&TrialResult> = results.trials.iter().filter(|t| t.n == n).collect();
            let m = results.truths.len() as f64;
            let pooled = (results.truths.iter().map(|(_, se)| se * se).sum::<f64>() / m).sqrt();
            rows.extend(summarize(results, ALL_POLICIES, n, &selected, pooled));
        }
    }
    rows
}

/// Recomputes every per-policy row's MSE directly from the stored trials
/// and checks it against the table.
fn verify_rows(results: &ExperimentResults) -> Result<(), HarnessError> {
    for row in results.rows.iter().filter(|r| r.policy != ALL_POLICIES) {
        let p = results.policy_names.iter().position(|name| *name == row.policy).expect("row policy exists");
        let j = results
            .estimator_ids
            .iter()
            .map(String::as_str)
            .chain(results.methods.iter().map(|m| m.name()))
            .position(|name| name == row.method)
            .expect("row method exists");
        let mut total = 0.0;
        let mut count = 0usize;
        for t in &results.trials {
            if t.policy == p && t.n == row.n && t.failure.is_none() {
                let err = value_of(t, j) - results.truths[p].0;
                total += err * err;
                count += 1;
            }
        }
        let mse = total / count as f64;
        let agree = (count == 0 && row.mse.is_nan()) || (mse - row.mse).abs() <= 1e-12 * (1.0 + mse.abs());
        if !agree || (row.rmse - row.mse.sqrt()).abs() > 1e-12 * (1.0 + row.rmse) && count > 0 {
            return Err(HarnessError::Estimator(format!(
                "table check failed for {}/{}/{}: {} vs {}",
                row.policy, row.n, row.method, row.mse, mse
            )));
        }
    }
    Ok(())
}

// ── Ground truth for the CLI ────────────────────────────────────────────

/// Value of a policy in an environment: `(value, standard error)`.
pub fn ground_truth(env: &Environment, policy: &PolicySpec, episodes: usize, seed: u64) -> Result<(f64, f64), HarnessError> {
    match env {
        Environment::Tabular { mdp, .. } => {
            let pi = policy.tabular(mdp)?;
            Ok((true_value_dp(mdp, &pi).map_err(HarnessError::config)?, 0.0))
        }
        Environment::Bandit(problem) => Ok(problem.true_value(&policy.bandit(problem)?, episodes, seed)),
    }
}
