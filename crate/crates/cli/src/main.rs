use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bandit_lab::harness::config::ExperimentConfig;
use bandit_lab::harness::verify::verify_simulation_oracle;
use bandit_lab::harness::{emit_csv, emit_json, estimate_bayesian_regret};
use bandit_lab::oracle::DiversityThresholds;
use bandit_lab::policy::linucb_default_params;
use bandit_lab::Error;
use clap::{Parser, Subcommand};

const SEED_ENV: &str = "BANDIT_LAB_SEED";
const DEFAULT_VERIFY_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(
    name = "bandit-lab",
    version,
    about = "Linear contextual bandits under perturbed contexts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Root seed; overrides BANDIT_LAB_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Reject rho > 1/sqrt(d) instead of warning.
    #[arg(long, global = true)]
    strict: bool,

    /// Number of Monte-Carlo replicates; overrides the config file.
    #[arg(long, global = true)]
    replicates: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full experiment and write the CSV traces and JSON report.
    Run { config: PathBuf },
    /// Statistical self-check of the reward-simulation oracle.
    VerifyOracle,
    /// Record lambda_min(Z_t) for every policy and write it as CSV.
    Diversity { config: PathBuf },
    /// Print Y0, tau0 and the LinUCB parameters L and S.
    Thresholds { config: PathBuf },
}

/// Failure with its exit code: 1 for bad input, 2 for runtime errors.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_config_error() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure {
            code: 1,
            message: format!("{SEED_ENV} must be an unsigned 64-bit integer, got {v:?}"),
        }),
        Err(_) => Ok(None),
    }
}

impl Cli {
    fn load(&self, path: &Path) -> Result<ExperimentConfig, Failure> {
        let mut config = ExperimentConfig::load(path).map_err(config_failure)?;
        if let Some(seed) = self.seed.or(env_seed()?) {
            config.seed = seed;
        }
        if let Some(m) = self.replicates {
            config.replicates = m;
        }
        config.strict |= self.strict;
        config.validate().map_err(config_failure)?;
        config.build_instance().map_err(config_failure)?;
        Ok(config)
    }

    fn output_path(&self, configured: Option<&Path>, default: &str) -> Result<PathBuf, Failure> {
        let base = self.out_dir.clone().unwrap_or_default();
        if !base.as_os_str().is_empty() {
            std::fs::create_dir_all(&base).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", base.display()),
            })?;
        }
        Ok(base.join(configured.unwrap_or(Path::new(default))))
    }
}

fn run(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let config = cli.load(path)?;
    let result = estimate_bayesian_regret(&config)?;
    let csv = cli.output_path(config.outputs.csv.as_deref(), "traces.csv")?;
    let json = cli.output_path(config.outputs.json.as_deref(), "report.json")?;
    emit_csv(result.all_traces(), &csv)?;
    emit_json(&result.report, &json)?;

    let report = &result.report;
    println!(
        "seed {}  replicates {}  horizon {}",
        report.seed, report.replicates, report.horizon
    );
    println!("{:<28} {:>6} {:>14} {:>10}", "policy", "Y", "regret(T)", "stderr");
    for p in &report.policies {
        let y = p.batch_size.map(|y| y.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:>6} {:>14.4} {:>10.4}",
            p.label,
            y,
            p.final_regret(),
            p.final_stderr()
        );
        if let Some(pred) = &p.mean_cum_pred_regret {
            println!(
                "{:<28} {:>6} {:>14.4}",
                "  prediction regret",
                "",
                pred.last().copied().unwrap_or(0.0)
            );
        }
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn diversity(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut config = cli.load(path)?;
    config.outputs.diversity = true;
    let result = estimate_bayesian_regret(&config)?;
    let csv = cli.output_path(None, "diversity.csv")?;
    emit_csv(result.all_traces(), &csv)?;
    println!(
        "{:<28} {:>12} {:>16} {:>12} {:>10}",
        "policy", "tau0", "lambda_min(T)", "bound(T)", "above"
    );
    for p in &result.report.policies {
        if let Some(d) = &p.diversity {
            println!(
                "{:<28} {:>12.4e} {:>16.4} {:>12.4} {:>10.4}",
                p.label, d.tau0, d.mean_final_lambda_min, d.final_bound, d.fraction_above_bound
            );
        }
    }
    println!("wrote {}", csv.display());
    Ok(())
}

fn thresholds(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let config = cli.load(path)?;
    let instance = config.build_instance()?;
    let th = DiversityThresholds::for_instance(&instance);
    let linucb = linucb_default_params(&instance)?;
    println!("Y0 {}", th.y0);
    println!("tau0 {}", th.tau0);
    println!("L {}", linucb.l);
    println!("S {}", linucb.s);
    Ok(())
}

fn verify_oracle(cli: &Cli) -> Result<(), Failure> {
    let seed = cli.seed.or(env_seed()?).unwrap_or(DEFAULT_VERIFY_SEED);
    let outcomes = verify_simulation_oracle(seed)?;
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(Failure {
            code: 2,
            message: format!("{failed} of {} oracle checks failed (seed {seed})", outcomes.len()),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::VerifyOracle => verify_oracle(&cli),
        Command::Diversity { config } => diversity(&cli, config),
        Command::Thresholds { config } => thresholds(&cli, config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
