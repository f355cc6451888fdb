//! Replicated experiment sweeps over `(policy, n, T)`.
//!
//! Every replicate simulates a behavior-policy batch, fits FQE for each
//! target policy, and compares the plug-in value with a cached oracle
//! value. Work items run on a bounded rayon pool; records are emitted in
//! `(policy, n, T, replicate)` order regardless of scheduling.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{quantile_sorted, DEFAULT_DEGREE};
use crate::env::{
    fmt_f64, make_paper_env, make_tabular_env, mix_seed, name_hash, rng_from_seed, sample_index, simulate,
    EnvSpec, DEFAULT_F_COEFFICIENTS,
};
use crate::error::{Error, Result};
use crate::fqe::fit_with_plan;
use crate::integrate::Integration;
use crate::policy::PolicySpec;
use crate::regress::RidgeRule;
use crate::selection::{FeaturePlan, KRule};

pub const RESULTS_HEADER: [&str; 13] = [
    "policy",
    "n",
    "T",
    "k_rule",
    "k_mean",
    "replicate",
    "nu_hat",
    "nu_true",
    "abs_error",
    "seed",
    "wall_time_ms",
    "status",
    "reason",
];

pub const SUMMARY_HEADER: [&str; 8] = ["policy", "n", "T", "mean", "median", "q10", "q90", "failures"];

pub const DEFAULT_ORACLE_EPISODES: usize = 1_000_000;
pub const MIN_ORACLE_EPISODES: usize = 10_000;
const ORACLE_CHUNK: usize = 10_000;

// ── configuration ──────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Paper {
        #[serde(default)]
        f_coefficients: Option<Vec<f64>>,
    },
    Tabular {
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Paper { f_coefficients: None }
    }
}

impl EnvConfig {
    pub fn build(&self, horizon: usize) -> Result<EnvSpec> {
        match self {
            EnvConfig::Paper { f_coefficients } => make_paper_env(
                f_coefficients.as_deref().unwrap_or(&DEFAULT_F_COEFFICIENTS),
                horizon,
            ),
            EnvConfig::Tabular {
                transitions,
                rewards,
                initial,
            } => make_tabular_env(transitions.clone(), rewards.clone(), initial.clone(), horizon),
        }
    }
}

/// A policy by preset name, or an inline table for tabular environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyConfig {
    Preset(String),
    Table {
        name: String,
        table: Vec<Vec<Vec<f64>>>,
    },
}

impl PolicyConfig {
    pub fn name(&self) -> &str {
        match self {
            PolicyConfig::Preset(n) => n,
            PolicyConfig::Table { name, .. } => name,
        }
    }

    pub fn build(&self, env: &EnvSpec) -> Result<PolicySpec> {
        let p = match self {
            PolicyConfig::Preset(n) => PolicySpec::preset(n, env)?,
            PolicyConfig::Table { table, .. } => PolicySpec::tabular(table.clone())?,
        };
        p.check_compatible(env)?;
        Ok(p)
    }
}

fn default_behavior() -> PolicyConfig {
    PolicyConfig::Preset("behavior".into())
}

/// Where `ν(π)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// `ν = 0` exactly; only for the uniform policy on the continuous env.
    SymmetryZero,
    MonteCarlo { episodes: usize, seed: u64 },
    /// The symmetry oracle where it applies, Monte Carlo elsewhere.
    Auto { episodes: usize, seed: u64 },
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::Auto {
            episodes: DEFAULT_ORACLE_EPISODES,
            seed: 0x5EED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: EnvConfig,
    pub policies: Vec<PolicyConfig>,
    #[serde(default = "default_behavior")]
    pub behavior: PolicyConfig,
    pub n_grid: Vec<usize>,
    #[serde(alias = "T_grid")]
    pub t_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_k_rule")]
    pub k_rule: KRule,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub ridge: RidgeRule,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub integration: Integration,
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Wall times make the results file run-dependent, so they are off by default.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_k_rule() -> KRule {
    KRule::Loocv { candidates: None }
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        for (name, grid) in [("n_grid", &self.n_grid), ("t_grid", &self.t_grid)] {
            if grid.is_empty() {
                return cfg_err(format!("{name} is empty"));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return cfg_err(format!("{name} must be strictly increasing"));
            }
            if grid[0] == 0 {
                return cfg_err(format!("{name} entries must be positive"));
            }
        }
        if self.replicates == 0 {
            return cfg_err("replicates must be at least 1".into());
        }
        if self.policies.is_empty() {
            return cfg_err("no target policies".into());
        }
        if self.workers == Some(0) {
            return cfg_err("workers must be at least 1".into());
        }
        match self.oracle {
            OracleSpec::MonteCarlo { episodes, .. } | OracleSpec::Auto { episodes, .. }
                if episodes < MIN_ORACLE_EPISODES =>
            {
                return cfg_err(format!("oracle needs at least {MIN_ORACLE_EPISODES} episodes"));
            }
            _ => {}
        }
        self.ridge.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.plan().validate().map_err(|e| Error::Config(e.to_string()))?;
        let env = self.env.build(self.t_grid[0]).map_err(|e| Error::Config(e.to_string()))?;
        self.behavior.build(&env).map_err(|e| Error::Config(e.to_string()))?;
        let mut names = Vec::new();
        for p in &self.policies {
            let spec = p.build(&env).map_err(|e| Error::Config(e.to_string()))?;
            if names.contains(&p.name()) {
                return cfg_err(format!("duplicate policy '{}'", p.name()));
            }
            names.push(p.name());
            if self.oracle == OracleSpec::SymmetryZero && !symmetry_applies(&env, &spec) {
                return cfg_err(format!("symmetry_zero oracle does not apply to policy '{}'", p.name()));
            }
        }
        Ok(())
    }

    pub fn plan(&self) -> FeaturePlan {
        match &self.env {
            EnvConfig::Tabular { initial, .. } => FeaturePlan::Indicator { states: initial.len() },
            EnvConfig::Paper { .. } => FeaturePlan::Spline {
                degree: self.degree,
                rule: self.k_rule.clone(),
            },
        }
    }

    pub fn k_rule_label(&self) -> String {
        match self.plan() {
            FeaturePlan::Indicator { .. } => "indicator".into(),
            FeaturePlan::Spline { rule, .. } => rule.label(),
        }
    }
}

// ── oracle ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub std_error: f64,
}

fn symmetry_applies(env: &EnvSpec, policy: &PolicySpec) -> bool {
    env.curve().is_some() && policy.is_uniform()
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }
}

fn episode_returns(env: &EnvSpec, policy: &PolicySpec, count: usize, seed: u64) -> Moments {
    let mut rng = rng_from_seed(seed);
    let mut m = Moments::default();
    for _ in 0..count {
        let mut s = env.initial().sample(&mut rng);
        let mut total = 0.0;
        for t in 1..=env.horizon() {
            let a = sample_index(&policy.probs(t, s), &mut rng);
            let (next, r) = env.step(s, a, &mut rng);
            total += r;
            s = next;
        }
        m.push(total);
    }
    m
}

/// Mean return of `episodes` fresh target-policy episodes with its
/// standard error. Chunks are seeded independently and merged in order,
/// so the result does not depend on the thread count.
pub fn monte_carlo_value(env: &EnvSpec, policy: &PolicySpec, episodes: usize, seed: u64) -> Result<OracleValue> {
    if episodes < 2 {
        return Err(Error::InvalidArgument("Monte Carlo oracle needs at least 2 episodes".into()));
    }
    policy.check_compatible(env)?;
    let chunks = episodes.div_ceil(ORACLE_CHUNK);
    let total = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = ORACLE_CHUNK.min(episodes - c * ORACLE_CHUNK);
            episode_returns(env, policy, count, mix_seed(seed, &[c as u64]))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let var = total.m2 / (total.count - 1.0);
    Ok(OracleValue {
        value: total.mean,
        std_error: (var / total.count).sqrt(),
    })
}

/// `ν(π)` for `env` (at its own horizon) under the requested oracle.
pub fn true_value(env: &EnvSpec, policy: &PolicySpec, oracle: OracleSpec) -> Result<OracleValue> {
    let symmetric = symmetry_applies(env, policy);
    match oracle {
        OracleSpec::SymmetryZero if !symmetric => Err(Error::InvalidArgument(
            "symmetry_zero oracle needs the uniform policy on the continuous environment".into(),
        )),
        OracleSpec::SymmetryZero => Ok(OracleValue {
            value: 0.0,
            std_error: 0.0,
        }),
        OracleSpec::Auto { .. } if symmetric => Ok(OracleValue {
            value: 0.0,
            std_error: 0.0,
        }),
        OracleSpec::MonteCarlo { episodes, seed } | OracleSpec::Auto { episodes, seed } => {
            monte_carlo_value(env, policy, episodes, seed)
        }
    }
}

// ── records ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub policy: String,
    pub n: usize,
    pub horizon: usize,
    pub k_rule: String,
    pub k_mean: Option<f64>,
    pub replicate: usize,
    pub nu_hat: Option<f64>,
    pub nu_true: f64,
    pub abs_error: Option<f64>,
    pub seed: u64,
    pub wall_time_ms: Option<f64>,
    pub status: Status,
    pub reason: String,
}

impl ExperimentRecord {
    fn csv_fields(&self) -> [String; 13] {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        [
            self.policy.clone(),
            self.n.to_string(),
            self.horizon.to_string(),
            self.k_rule.clone(),
            opt(self.k_mean),
            self.replicate.to_string(),
            opt(self.nu_hat),
            fmt_f64(self.nu_true),
            opt(self.abs_error),
            self.seed.to_string(),
            opt(self.wall_time_ms),
            match self.status {
                Status::Ok => "ok".into(),
                Status::Error => "error".into(),
            },
            self.reason.clone(),
        ]
    }
}

pub fn write_records<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

// ── aggregation ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub n: usize,
    pub horizon: usize,
    /// `None` when every replicate in the cell failed.
    pub stats: Option<ErrorStats>,
    pub failures: usize,
}

/// Per-cell statistics of `abs_error`, cells in order of first appearance.
/// Error rows are excluded from the statistics and counted.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, usize, usize)> = Vec::new();
    let mut cells: HashMap<(String, usize, usize), (Vec<f64>, usize)> = HashMap::new();
    for r in records {
        let key = (r.policy.clone(), r.n, r.horizon);
        let cell = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match (r.status, r.abs_error) {
            (Status::Ok, Some(e)) => cell.0.push(e),
            _ => cell.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (mut errs, failures) = cells.remove(&key).expect("cell recorded");
            let stats = (!errs.is_empty()).then(|| {
                errs.sort_by(f64::total_cmp);
                ErrorStats {
                    mean: errs.iter().sum::<f64>() / errs.len() as f64,
                    median: quantile_sorted(&errs, 0.5),
                    q10: quantile_sorted(&errs, 0.1),
                    q90: quantile_sorted(&errs, 0.9),
                }
            });
            SummaryRow {
                policy: key.0,
                n: key.1,
                horizon: key.2,
                stats,
                failures,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let s = |f: fn(&ErrorStats) -> f64| r.stats.as_ref().map(|x| fmt_f64(f(x))).unwrap_or_default();
        w.write_record([
            r.policy.clone(),
            r.n.to_string(),
            r.horizon.to_string(),
            s(|x| x.mean),
            s(|x| x.median),
            s(|x| x.q10),
            s(|x| x.q90),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ── runner ─────────────────────────────────────────────────────────────

/// Seed of the behavior batch for one `(n, T, replicate)` cell. Target
/// policies share the batch, and the seed does not depend on grid
/// positions, so growing a grid leaves existing cells unchanged.
pub fn replicate_seed(base_seed: u64, n: usize, horizon: usize, replicate: usize) -> u64 {
    mix_seed(base_seed, &[n as u64, horizon as u64, replicate as u64])
}

/// Oracle seed for one `(policy, T)` pair.
fn oracle_for(oracle: OracleSpec, policy: &str, horizon: usize) -> OracleSpec {
    let derive = |seed: u64| mix_seed(seed, &[name_hash(policy), horizon as u64]);
    match oracle {
        OracleSpec::SymmetryZero => OracleSpec::SymmetryZero,
        OracleSpec::MonteCarlo { episodes, seed } => OracleSpec::MonteCarlo {
            episodes,
            seed: derive(seed),
        },
        OracleSpec::Auto { episodes, seed } => OracleSpec::Auto {
            episodes,
            seed: derive(seed),
        },
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<SummaryRow>,
    /// Oracle values per `(policy, T)`.
    pub oracle: Vec<(String, usize, OracleValue)>,
}

pub fn summary_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    results.with_file_name(format!("{stem}_summary.csv"))
}

fn write_atomically(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        write(&mut f)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs the full sweep. When `config.output` is set, the results CSV and
/// its `_summary.csv` sibling are written atomically.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<RunOutput> {
    let plan = config.plan();
    let label = config.k_rule_label();
    let envs: Vec<EnvSpec> = config
        .t_grid
        .iter()
        .map(|&t| config.env.build(t))
        .collect::<Result<_>>()?;
    let behavior: Vec<PolicySpec> = envs.iter().map(|e| config.behavior.build(e)).collect::<Result<_>>()?;
    let targets: Vec<Vec<PolicySpec>> = envs
        .iter()
        .map(|e| config.policies.iter().map(|p| p.build(e)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let oracle_cells: Vec<(usize, usize)> = (0..config.policies.len())
        .flat_map(|p| (0..envs.len()).map(move |ti| (p, ti)))
        .collect();
    let oracle_values: Vec<OracleValue> = oracle_cells
        .par_iter()
        .map(|&(p, ti)| {
            let spec = oracle_for(config.oracle, config.policies[p].name(), config.t_grid[ti]);
            true_value(&envs[ti], &targets[ti][p], spec)
        })
        .collect::<Result<_>>()?;
    let oracle_of = |p: usize, ti: usize| oracle_values[p * envs.len() + ti];
    log::info!("oracle values ready for {} (policy, T) cells", oracle_values.len());

    let items: Vec<(usize, usize, usize)> = (0..config.n_grid.len())
        .flat_map(|ni| (0..envs.len()).flat_map(move |ti| (0..config.replicates).map(move |r| (ni, ti, r))))
        .collect();

    let per_item: Vec<Vec<ExperimentRecord>> = items
        .par_iter()
        .map(|&(ni, ti, r)| {
            let (n, horizon) = (config.n_grid[ni], config.t_grid[ti]);
            let seed = replicate_seed(config.base_seed, n, horizon, r);
            let batch = simulate(&envs[ti], &behavior[ti], n, seed);
            config
                .policies
                .iter()
                .enumerate()
                .map(|(p, pc)| {
                    let started = Instant::now();
                    let nu_true = oracle_of(p, ti).value;
                    let outcome = batch.as_ref().map_err(|e| e.to_string()).and_then(|b| {
                        let target = &targets[ti][p];
                        let mut model = fit_with_plan(b, target, &plan, config.ridge).map_err(|e| e.to_string())?;
                        let v = model
                            .estimate_value(&envs[ti], target, config.integration)
                            .map_err(|e| e.to_string())?;
                        Ok((v, model.mean_k()))
                    });
                    let wall = config
                        .record_timing
                        .then(|| started.elapsed().as_secs_f64() * 1e3);
                    let (nu_hat, k_mean, status, reason) = match outcome {
                        Ok((v, k)) if v.is_finite() => (Some(v), Some(k), Status::Ok, String::new()),
                        Ok((v, _)) => (None, None, Status::Error, format!("non-finite estimate {v}")),
                        Err(e) => (None, None, Status::Error, e),
                    };
                    ExperimentRecord {
                        policy: pc.name().to_string(),
                        n,
                        horizon,
                        k_rule: label.clone(),
                        k_mean,
                        replicate: r,
                        abs_error: nu_hat.map(|v| (v - nu_true).abs()),
                        nu_hat,
                        nu_true,
                        seed,
                        wall_time_ms: wall,
                        status,
                        reason,
                    }
                })
                .collect()
        })
        .collect();

    // items are (n, T, r)-ordered; reorder to (policy, n, T, r)
    let mut records = Vec::with_capacity(items.len() * config.policies.len());
    for p in 0..config.policies.len() {
        records.extend(per_item.iter().map(|recs| recs[p].clone()));
    }
    let failures = records.iter().filter(|r| r.status == Status::Error).count();
    if failures > 0 {
        log::warn!("{failures} replicate fits failed; see the status/reason columns");
    }

    let summary = aggregate(&records);
    if let Some(path) = &config.output {
        write_atomically(path, |f| write_records(&records, f))?;
        write_atomically(&summary_path(path), |f| write_summary(&summary, f))?;
    }
    let oracle = oracle_cells
        .iter()
        .map(|&(p, ti)| (config.policies[p].name().to_string(), config.t_grid[ti], oracle_of(p, ti)))
        .collect();
    Ok(RunOutput {
        records,
        summary,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(policy: &str, n: usize, err: Option<f64>) -> ExperimentRecord {
        ExperimentRecord {
            policy: policy.into(),
            n,
            horizon: 20,
            k_rule: "loocv".into(),
            k_mean: Some(8.0),
            replicate: 0,
            nu_hat: err,
            nu_true: 0.0,
            abs_error: err,
            seed: 1,
            wall_time_ms: None,
            status: if err.is_some() { Status::Ok } else { Status::Error },
            reason: String::new(),
        }
    }

    #[test]
    fn aggregate_small_cells() {
        let s = aggregate(&[record("a", 200, Some(1.5))]);
        assert_eq!(s[0].stats.unwrap().mean, 1.5);
        let s = aggregate(&[record("a", 200, Some(1.0)), record("a", 200, Some(3.0)), record("a", 200, None)]);
        let st = s[0].stats.unwrap();
        assert_eq!((st.mean, st.median), (2.0, 2.0));
        assert_eq!(s[0].failures, 1);
        let s = aggregate(&[record("a", 200, None)]);
        assert!(s[0].stats.is_none());
    }

    #[test]
    fn aggregate_keeps_cell_order() {
        let s = aggregate(&[record("b", 400, Some(1.0)), record("a", 200, Some(1.0)), record("b", 400, Some(2.0))]);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].policy.as_str(), s[0].n), ("b", 400));
    }

    #[test]
    fn symmetry_oracle_rules() {
        let env = EnvSpec::paper_default(20).unwrap();
        let a = PolicySpec::preset("a", &env).unwrap();
        let b = PolicySpec::preset("b", &env).unwrap();
        let v = true_value(&env, &a, OracleSpec::SymmetryZero).unwrap();
        assert_eq!((v.value, v.std_error), (0.0, 0.0));
        assert!(true_value(&env, &b, OracleSpec::SymmetryZero).is_err());
    }

    #[test]
    fn moments_merge_matches_direct() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..33].iter().for_each(|&x| a.push(x));
        xs[33..].iter().for_each(|&x| b.push(x));
        let m = a.merge(b);
        assert_abs_diff_eq!(m.mean, all.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(m.m2, all.m2, epsilon = 1e-9);
    }

    #[test]
    fn config_validation() {
        let ok = r#"{"policies":["a"],"n_grid":[200],"t_grid":[20],"replicates":2,"base_seed":1}"#;
        assert!(ExperimentConfig::from_json_str(ok).is_ok());
        let upper = r#"{"policies":["a"],"n_grid":[200],"T_grid":[20],"replicates":2,"base_seed":1}"#;
        assert!(ExperimentConfig::from_json_str(upper).is_ok());
        for bad in [
            r#"{"policies":["a"],"n_grid":[200],"t_grid":[20],"replicates":2,"base_seed":1,"bogus":3}"#,
            r#"{"policies":["a"],"n_grid":[400,200],"t_grid":[20],"replicates":2,"base_seed":1}"#,
            r#"{"policies":["a"],"n_grid":[],"t_grid":[20],"replicates":2,"base_seed":1}"#,
            r#"{"policies":["a"],"n_grid":[200],"t_grid":[20],"replicates":0,"base_seed":1}"#,
            r#"{"policies":["b"],"n_grid":[200],"t_grid":[20],"replicates":1,"base_seed":1,"oracle":{"kind":"symmetry_zero"}}"#,
            r#"{"policies":["a"],"n_grid":[200],"t_grid":[20],"replicates":1,"base_seed":1,"oracle":{"kind":"monte_carlo","episodes":100,"seed":1}}"#,
            r#"{"policies":["z"],"n_grid":[200],"t_grid":[20],"replicates":1,"base_seed":1}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn summary_path_sits_next_to_results() {
        assert_eq!(summary_path(Path::new("/tmp/x/results.csv")), PathBuf::from("/tmp/x/results_summary.csv"));
    }
}
