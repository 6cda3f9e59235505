//! `opera` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 estimator failure (including trials that failed inside a run).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use opera::harness::{
    ground_truth, load_config, number, run_experiment, run_gaussian_testbed, Environment, EnvironmentConfig,
    ExperimentConfig, Format, GaussianTestbedConfig, HarnessError, PolicyBase, PolicySpec, Table,
};
use opera::mdp::TabularMdp;

#[derive(Debug, Parser)]
#[command(name = "opera", version, about = "Bootstrap-weighted ensembles of off-policy estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full experiment from a JSON or TOML config.
    Run { config: PathBuf },
    /// Run the synthetic Gaussian testbed.
    Testbed { config: PathBuf },
    /// Ground-truth value of a policy.
    ///
    /// ENV is a built-in id (graph, sepsis, bandit), an environment config
    /// file, or an exported tabular MDP. POLICY is `optimal`, `uniform`,
    /// either with an `:EPSILON` suffix, or a policy spec file.
    Value {
        env: String,
        policy: String,
        /// Monte-Carlo contexts when the value is not computed exactly.
        #[arg(long, default_value_t = 1_000_000)]
        episodes: usize,
    },
    /// Write a tabular environment as JSON.
    ExportEnv { id: String, path: PathBuf },
}

enum Failure {
    Io(String),
    Config(String),
    Estimator(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Estimator(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Config(m) | Failure::Estimator(m) => m,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => Failure::Config(e.to_string()),
            HarnessError::Io { .. } => Failure::Io(e.to_string()),
            HarnessError::Estimator(_) => Failure::Estimator(e.to_string()),
        }
    }
}

/// Input files that cannot be read are configuration problems.
fn input<T>(r: Result<T, HarnessError>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(e.to_string()))
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ── Subcommands ─────────────────────────────────────────────────────────

fn run(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut config = input(ExperimentConfig::from_path(path))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let results = run_experiment(&config)?;
    let out = cli.out.as_deref().or(config.output.as_deref());
    write_output(&results.table().render(cli.format), out)?;
    let failed = results.failed_trials();
    if failed > 0 {
        let first = results.trials.iter().find_map(|t| t.failure.clone()).unwrap_or_default();
        return Err(Failure::Estimator(format!("{failed} trial(s) failed; first: {first}")));
    }
    Ok(())
}

fn testbed(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut config: GaussianTestbedConfig = input(load_config(path))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let report = run_gaussian_testbed(&config)?;
    write_output(&report.table(&config).render(cli.format), cli.out.as_deref())
}

fn environment(arg: &str) -> Result<Environment, Failure> {
    if matches!(arg, "graph" | "sepsis" | "bandit") {
        return Ok(EnvironmentConfig::builtin(arg).build()?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Failure::Config(format!("`{arg}` is neither a built-in environment nor a file")));
    }
    if let Ok(config) = load_config::<EnvironmentConfig>(path) {
        return Ok(config.build()?);
    }
    let mdp = TabularMdp::from_json_file(path).map_err(|e| Failure::Config(format!("{arg}: {e}")))?;
    let default_v_max = mdp.horizon() as f64 * mdp.max_abs_reward();
    Ok(Environment::Tabular { id: arg.to_string(), mdp, default_v_max })
}

fn policy(arg: &str) -> Result<PolicySpec, Failure> {
    let (base, eps) = match arg.split_once(':') {
        Some((b, e)) => (b, Some(e)),
        None => (arg, None),
    };
    let base = match base {
        "optimal" => PolicyBase::Optimal,
        "uniform" => PolicyBase::Uniform,
        _ => {
            let path = Path::new(arg);
            if !path.exists() {
                return Err(Failure::Config(format!("unknown policy `{arg}`")));
            }
            return input(load_config(path));
        }
    };
    let epsilon = match eps {
        Some(e) => e.parse::<f64>().map_err(|_| Failure::Config(format!("bad epsilon in `{arg}`")))?,
        None => 0.0,
    };
    Ok(PolicySpec { name: None, base, epsilon })
}

fn value(cli: &Cli, env_arg: &str, policy_arg: &str, episodes: usize) -> Result<(), Failure> {
    let env = environment(env_arg)?;
    let spec = policy(policy_arg)?;
    let (v, se) = ground_truth(&env, &spec, episodes, cli.seed.unwrap_or(0))?;
    let mut t = Table::new(&["env", "policy", "value", "stderr"]);
    t.push(vec![json!(env_arg), json!(spec.label()), number(v), number(se)]);
    write_output(&t.render(cli.format), cli.out.as_deref())
}

fn export_env(id: &str, path: &Path) -> Result<(), Failure> {
    match environment(id)? {
        Environment::Tabular { mdp, .. } => {
            std::fs::write(path, mdp.to_json_string()).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        Environment::Bandit(_) => Err(Failure::Config(format!("`{id}` is not a tabular environment"))),
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Run { config } => run(cli, config),
        Command::Testbed { config } => testbed(cli, config),
        Command::Value { env, policy, episodes } => value(cli, env, policy, *episodes),
        Command::ExportEnv { id, path } => export_env(id, path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
