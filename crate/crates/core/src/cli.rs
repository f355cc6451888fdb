//! Command-line front end. Results go to stdout, logs to stderr.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::basis::{BSplineBasis, FeatureSystem, DEFAULT_DEGREE};
use crate::env::{fmt_f64, mix_seed, simulate, EnvSpec, TrajectoryBatch};
use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentConfig};
use crate::fqe::fit_with_plan;
use crate::integrate::Integration;
use crate::mis::kappa_hat;
use crate::policy::PolicySpec;
use crate::regress::RidgeRule;
use crate::selection::{resolve_k, FeaturePlan, KRule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fqe-sieve", version, about = "Finite-horizon off-policy evaluation with spline FQE")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Fit FQE on a trajectory CSV, print the value estimate and save the model.
    Fit(FitArgs),
    /// Run a replicated experiment from a JSON config and print the summary.
    Experiment(ExperimentArgs),
    /// Monte Carlo value of a target policy; prints `value se`.
    Oracle(OracleArgs),
    /// Distribution-shift diagnostic between a target and the behavior policy.
    Kappa(KappaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EnvName {
    Paper,
}

impl EnvName {
    fn build(self, horizon: usize) -> Result<EnvSpec> {
        match self {
            EnvName::Paper => EnvSpec::paper_default(horizon),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "paper")]
    pub env: EnvName,
    /// `behavior`, `a`, `b` or `c`.
    #[arg(long, default_value = "behavior")]
    pub policy: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "T")]
    pub horizon: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `a`, `b` or `c`.
    #[arg(long)]
    pub policy: String,
    /// An integer, `rot:c[:exponent]` or `loocv`.
    #[arg(long, default_value = "loocv")]
    pub k: KArg,
    /// Fixed ridge penalty; the relative default when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; fitting is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value = "paper")]
    pub env: EnvName,
    #[arg(long)]
    pub policy: String,
    #[arg(long = "T")]
    pub horizon: usize,
    #[arg(long, default_value_t = experiments::DEFAULT_ORACLE_EPISODES)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[arg(long, value_enum, default_value = "paper")]
    pub env: EnvName,
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "T")]
    pub horizon: usize,
    /// An integer or `rot:c[:exponent]`.
    #[arg(long)]
    pub k: KArg,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: u64,
}

/// `--k` values.
#[derive(Debug, Clone, PartialEq)]
pub struct KArg(pub KRule);

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "loocv" {
            return Ok(KArg(KRule::Loocv { candidates: None }));
        }
        if let Some(rest) = s.strip_prefix("rot:") {
            let parts: Vec<Option<f64>> = rest.split(':').map(|p| p.parse().ok()).collect();
            return match parts[..] {
                [Some(c)] => Ok(KArg(KRule::RuleOfThumb { c, exponent: 0.2 })),
                [Some(c), Some(exponent)] => Ok(KArg(KRule::RuleOfThumb { c, exponent })),
                _ => Err(format!("expected rot:c or rot:c:exponent, got '{s}'")),
            };
        }
        s.parse::<usize>()
            .map(|k| KArg(KRule::Fixed { k }))
            .map_err(|_| format!("expected an integer, rot:c or loocv, got '{s}'"))
    }
}

fn ridge_from(lambda: Option<f64>) -> Result<RidgeRule> {
    let rule = lambda.map_or_else(RidgeRule::default, |value| RidgeRule::Fixed { value });
    rule.validate()?;
    Ok(rule)
}

/// Exit code for an error: 1 for bad input, 2 for failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::InvalidEnv(_)
        | Error::InvalidPolicy(_)
        | Error::InvalidBasis(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let env = a.env.build(a.horizon)?;
            let policy = PolicySpec::preset(&a.policy, &env)?;
            let batch = simulate(&env, &policy, a.n, a.seed)?;
            let file = fs::File::create(&a.out)?;
            batch.write_csv(std::io::BufWriter::new(file))?;
            log::info!("wrote {} episodes to {}", a.n, a.out.display());
        }
        Command::Fit(a) => {
            let file = fs::File::open(&a.data)
                .map_err(|e| Error::InvalidArgument(format!("cannot open {}: {e}", a.data.display())))?;
            let batch = TrajectoryBatch::read_csv(std::io::BufReader::new(file))?;
            let env = EnvSpec::paper_default(batch.horizon())?;
            let target = PolicySpec::preset(&a.policy, &env)?;
            batch.validate_for(&env)?;
            let ridge = ridge_from(a.lambda)?;
            let plan = FeaturePlan::cubic(a.k.0);
            plan.validate()?;
            let mut model = fit_with_plan(&batch, &target, &plan, ridge)?;
            let value = model.estimate_value(&env, &target, Integration::default())?;
            if let Some(path) = &a.out {
                fs::write(path, serde_json::to_string_pretty(&model.to_json())?)?;
            }
            writeln!(out, "{}", fmt_f64(value))?;
        }
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            if a.workers.is_some() {
                cfg.workers = a.workers;
            }
            if a.out.is_some() {
                cfg.output = a.out;
            }
            if let Some(seed) = a.seed {
                cfg.base_seed = seed;
            }
            let result = experiments::run(&cfg)?;
            experiments::write_summary(&result.summary, &mut *out)?;
        }
        Command::Oracle(a) => {
            let env = a.env.build(a.horizon)?;
            let policy = PolicySpec::preset(&a.policy, &env)?;
            let v = experiments::monte_carlo_value(&env, &policy, a.episodes, a.seed)?;
            writeln!(out, "{} {}", fmt_f64(v.value), fmt_f64(v.std_error))?;
        }
        Command::Kappa(a) => {
            let env = a.env.build(a.horizon)?;
            let target = PolicySpec::preset(&a.policy, &env)?;
            let behavior = PolicySpec::behavior(env.actions());
            let k = resolve_k(&a.k.0, a.n, DEFAULT_DEGREE)
                .ok_or_else(|| Error::InvalidArgument("kappa needs a fixed K or rot:c".into()))?;
            a.k.0.validate(DEFAULT_DEGREE)?;
            let ridge = ridge_from(a.lambda)?;
            let b_batch = simulate(&env, &behavior, a.n, mix_seed(a.seed, &[0]))?;
            let pi_batch = simulate(&env, &target, a.n, mix_seed(a.seed, &[1]))?;
            let features = (1..=a.horizon)
                .map(|t| {
                    let basis = BSplineBasis::from_samples(&b_batch.states_at(t), k, DEFAULT_DEGREE)?;
                    FeatureSystem::bspline(basis, env.actions())
                })
                .collect::<Result<Vec<_>>>()?;
            let kappa = kappa_hat(&pi_batch, &b_batch, &features, ridge)?;
            writeln!(out, "{}", fmt_f64(kappa))?;
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_k_forms() {
        assert_eq!("loocv".parse::<KArg>().unwrap().0, KRule::Loocv { candidates: None });
        assert_eq!("12".parse::<KArg>().unwrap().0, KRule::Fixed { k: 12 });
        assert_eq!("rot:3".parse::<KArg>().unwrap().0, KRule::rule_of_thumb());
        assert_eq!(
            "rot:2.5:0.25".parse::<KArg>().unwrap().0,
            KRule::RuleOfThumb { c: 2.5, exponent: 0.25 }
        );
        for bad in ["rot:", "rot:x", "rot:1:y", "rot:1:2:3", "-4", "many"] {
            assert!(bad.parse::<KArg>().is_err(), "{bad}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Singular { step: Some(3) }), EXIT_RUNTIME);
        assert_eq!(main_with_args(["fqe-sieve", "bogus"]), EXIT_USAGE);
        assert_eq!(main_with_args(["fqe-sieve", "fit", "--policy", "a"]), EXIT_USAGE);
    }
}
