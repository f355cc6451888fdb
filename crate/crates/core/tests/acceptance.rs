//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::time::Instant;

use fqe_sieve::basis::{BSplineBasis, FeatureSystem};
use fqe_sieve::env::{simulate, EnvSpec};
use fqe_sieve::experiments::{self, monte_carlo_value, true_value, ExperimentConfig, OracleSpec};
use fqe_sieve::fqe::{fit, plan_features};
use fqe_sieve::integrate::Integration;
use fqe_sieve::mis::{compute_weights, kappa_hat, mis_value};
use fqe_sieve::policy::PolicySpec;
use fqe_sieve::regress::{loocv_score, Design, RegressionProblem, RidgeRule};
use fqe_sieve::selection::{FeaturePlan, KRule};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::*;

const IDENTITY_TOL: f64 = 1e-8;
const EMPIRICAL_DP_TOL: f64 = 1e-10;
const TRUE_DP_TOL: f64 = 0.05;
const MC_SIGMAS: f64 = 4.0;
const N_SLOPE: (f64, f64) = (-0.65, -0.35);
const T_SLOPE: (f64, f64) = (0.6, 1.4);
const LOOCV_REL_TOL: f64 = 1e-10;
const UNITY_TOL: f64 = 1e-12;
const REPRODUCTION_TOL: f64 = 1e-8;
const KAPPA_RANGE: (f64, f64) = (0.9, 1.1);
const KAPPA_ORACLE_TOL: f64 = 0.005;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mis_fqe_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..20u64 {
        let spline = i % 2 == 1;
        let n = [100, 500][(i as usize / 2) % 2];
        let horizon = [3, 10][(i as usize / 4) % 2];
        let ridge = if (i / 8) % 2 == 0 {
            RidgeRule::Fixed { value: 0.0 }
        } else {
            RidgeRule::default()
        };
        let mut r = rng(100 + i);
        let (env, target, features) = if spline {
            let env = EnvSpec::paper_default(horizon).unwrap();
            let target = PolicySpec::preset(["a", "b", "c"][i as usize % 3], &env).unwrap();
            (env, target, None)
        } else {
            let env = random_tabular_env(&mut r, 3, 2, horizon);
            let target = random_tabular_policy(&mut r, 3, 2);
            (env, target, Some(vec![FeatureSystem::indicator(3, 2).unwrap(); horizon]))
        };
        let batch = simulate(&env, &PolicySpec::behavior(2), n, 1000 + i).map_err(|e| e.to_string())?;
        let features = match features {
            Some(f) => f,
            None => plan_features(&batch, &target, &FeaturePlan::cubic(KRule::rule_of_thumb()), ridge)
                .map_err(|e| format!("config {i}: {e}"))?,
        };
        let mut model = fit(&batch, &target, &features, ridge).map_err(|e| format!("config {i}: {e}"))?;
        let v = model
            .estimate_value(&env, &target, Integration::default())
            .map_err(|e| e.to_string())?;
        let w = compute_weights(&batch, &target, &features, &env, ridge, Integration::default())
            .map_err(|e| format!("config {i}: {e}"))?;
        let m = mis_value(&batch, &w).map_err(|e| e.to_string())?;
        worst = worst.max((m - v).abs() / (1.0 + v.abs()));
        count += 1;
    }
    check(
        worst <= IDENTITY_TOL,
        format!("{count} configs, max |mis - fqe|/(1+|fqe|) = {worst:.2e} (tol {IDENTITY_TOL:.0e})"),
    )
}

fn tabular_oracles() -> Outcome {
    let (mut worst_emp, mut worst_true): (f64, f64) = (0.0, 0.0);
    let zero = RidgeRule::Fixed { value: 0.0 };
    for m in 0..10u64 {
        let mut r = rng(200 + m);
        let env = random_tabular_env(&mut r, 3, 2, 5);
        let target = random_tabular_policy(&mut r, 3, 2);
        let features = vec![FeatureSystem::indicator(3, 2).unwrap(); 5];
        for (n, seed) in [(1_000, 10 + m), (20_000, 20 + m)] {
            let batch = simulate(&env, &PolicySpec::behavior(2), n, seed).unwrap();
            let v = fit(&batch, &target, &features, zero)
                .and_then(|mut model| model.estimate_value(&env, &target, Integration::default()))
                .map_err(|e| format!("mdp {m}: {e}"))?;
            worst_emp = worst_emp.max((v - empirical_model_value(&batch, &env, &target)).abs());
            if n == 20_000 {
                worst_true = worst_true.max((v - true_model_value(&env, &target)).abs());
            }
        }
    }
    check(
        worst_emp <= EMPIRICAL_DP_TOL && worst_true <= TRUE_DP_TOL,
        format!("10 MDPs, max gap to empirical DP {worst_emp:.2e}, to true DP at n=20000 {worst_true:.4}"),
    )
}

fn symmetry_zero() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for horizon in [20, 100] {
        let env = EnvSpec::paper_default(horizon).unwrap();
        let a = PolicySpec::preset("a", &env).unwrap();
        let exact = true_value(&env, &a, OracleSpec::SymmetryZero).map_err(|e| e.to_string())?;
        let mc = monte_carlo_value(&env, &a, 1_000_000, 31 + horizon as u64).map_err(|e| e.to_string())?;
        let z = mc.value.abs() / mc.std_error;
        ok &= exact.value == 0.0 && mc.std_error > 0.0 && z <= MC_SIGMAS;
        parts.push(format!("T={horizon}: exact {} mc {:.4} (se {:.4}, {z:.2} se)", exact.value, mc.value, mc.std_error));
    }
    check(ok, parts.join("; "))
}

fn scaling_config(n_grid: Vec<usize>, t_grid: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig {
        env: Default::default(),
        policies: vec![experiments::PolicyConfig::Preset("a".into())],
        behavior: experiments::PolicyConfig::Preset("behavior".into()),
        n_grid,
        t_grid,
        replicates: 50,
        k_rule: KRule::Loocv { candidates: None },
        degree: 3,
        ridge: RidgeRule::default(),
        oracle: OracleSpec::SymmetryZero,
        integration: Integration::default(),
        base_seed: 20_240_601,
        output: None,
        workers: None,
        record_timing: false,
    }
}

fn slope_criterion(cfg: ExperimentConfig, by_n: bool, range: (f64, f64)) -> Outcome {
    let out = experiments::run(&cfg).map_err(|e| e.to_string())?;
    let failures: usize = out.summary.iter().map(|r| r.failures).sum();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in &out.summary {
        let Some(stats) = row.stats else {
            return Err(format!("cell n={} T={} has no successful replicate", row.n, row.horizon));
        };
        xs.push(if by_n { row.n } else { row.horizon } as f64);
        ys.push(stats.mean);
    }
    let slope = log_log_slope(&xs, &ys);
    let means: Vec<String> = xs.iter().zip(&ys).map(|(x, y)| format!("{x}:{y:.3e}")).collect();
    check(
        failures == 0 && (range.0..=range.1).contains(&slope),
        format!(
            "slope {slope:.3} (target [{}, {}]), mean abs error {}, {failures} failed fits",
            range.0,
            range.1,
            means.join(" ")
        ),
    )
}

fn loocv_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in 0..30u64 {
        let mut r = rng(300 + p);
        let n = r.random_range(12..60);
        let d = r.random_range(1..8);
        let x = DMatrix::from_fn(n, d, |_, _| r.random_range(-1.5..1.5));
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let lambda = if p % 3 == 0 { 0.0 } else { 10f64.powf(r.random_range(-4.0..0.0)) };
        let problem = RegressionProblem::new(Design::from_dense(&x).unwrap(), y.clone(), lambda).unwrap();
        let closed = loocv_score(&problem).map_err(|e| e.to_string())?;
        // explicit refits keep the full-sample penalty n·λ
        let mut brute = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let xi = x.select_rows(&keep);
            let yi = DVector::from_iterator(n - 1, keep.iter().map(|&j| y[j]));
            let lhs = xi.transpose() * &xi + DMatrix::identity(d, d) * (n as f64 * lambda);
            let beta = lhs.lu().solve(&(xi.transpose() * yi)).ok_or("refit singular")?;
            let resid = y[i] - (x.row(i) * beta)[0];
            brute += resid * resid;
        }
        brute /= n as f64;
        worst = worst.max((closed.score - brute).abs() / brute.abs().max(f64::MIN_POSITIVE));
    }
    check(worst <= LOOCV_REL_TOL, format!("30 problems, max relative gap {worst:.2e}"))
}

fn basis_properties() -> Outcome {
    let mut r = rng(7);
    let (mut unity, mut reproduction): (f64, f64) = (0.0, 0.0);
    let mut max_support = 0;
    let mut points = 0;
    for _ in 0..10 {
        let samples: Vec<f64> = (0..400).map(|_| r.random_range(-2.0..2.0f64).powi(3) / 4.0).collect();
        let k = r.random_range(4..25);
        let basis = BSplineBasis::from_samples(&samples, k, 3).map_err(|e| e.to_string())?;
        let (lo, hi) = basis.span();
        let poly = |x: f64| 0.3 - 1.1 * x + 0.7 * x * x + 0.25 * x.powi(3);
        // interpolate the cubic at the Greville abscissae, then compare off-node
        let nodes = basis.greville();
        let colloc = DMatrix::from_fn(k, k, |i, j| basis.eval(nodes[i])[j]);
        let rhs = DVector::from_iterator(k, nodes.iter().map(|&x| poly(x)));
        let coef = colloc.lu().solve(&rhs).ok_or("collocation singular")?;
        for _ in 0..100 {
            let x = r.random_range(lo..=hi);
            let values = basis.eval(x);
            unity = unity.max((values.iter().sum::<f64>() - 1.0).abs());
            max_support = max_support.max(values.iter().filter(|v| **v != 0.0).count());
            reproduction = reproduction.max((basis.combine(coef.as_slice(), x) - poly(x)).abs());
            points += 1;
        }
    }
    check(
        unity <= UNITY_TOL && max_support <= 4 && reproduction <= REPRODUCTION_TOL,
        format!("{points} points, unity gap {unity:.1e}, max nonzero {max_support}, cubic error {reproduction:.1e}"),
    )
}

fn kappa_sanity() -> Outcome {
    let mut r = rng(800);
    let env = random_tabular_env(&mut r, 3, 2, 5);
    let behavior = PolicySpec::behavior(2);
    let features = vec![FeatureSystem::indicator(3, 2).unwrap(); 5];
    let b = simulate(&env, &behavior, 10_000, 1).unwrap();
    let p = simulate(&env, &behavior, 10_000, 2).unwrap();
    let same = kappa_hat(&p, &b, &features, RidgeRule::default()).map_err(|e| e.to_string())?;

    // two states, deterministic target against the uniform behavior
    let env2 = random_tabular_env(&mut r, 2, 2, 3);
    let target = PolicySpec::tabular(vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]]).unwrap();
    let features2 = vec![FeatureSystem::indicator(2, 2).unwrap(); 3];
    let b2 = simulate(&env2, &behavior, 5_000, 3).unwrap();
    let p2 = simulate(&env2, &target, 5_000, 4).unwrap();
    let kappa = kappa_hat(&p2, &b2, &features2, RidgeRule::Fixed { value: 0.0 }).map_err(|e| e.to_string())?;
    let mut oracle = 0.0;
    for t in 1..=3 {
        let cell = |s: f64, a: usize| 2 * s as usize + a;
        let mut m = DVector::zeros(4);
        let mut gram = DMatrix::zeros(4, 4);
        for i in 0..p2.n() {
            m[cell(p2.state(i, t), p2.action(i, t))] += 1.0 / p2.n() as f64;
        }
        for i in 0..b2.n() {
            let c = cell(b2.state(i, t), b2.action(i, t));
            gram[(c, c)] += 1.0 / b2.n() as f64;
        }
        oracle += shift_eigen_oracle(&m, &gram) / 3.0;
    }
    check(
        (KAPPA_RANGE.0..=KAPPA_RANGE.1).contains(&same) && (kappa - oracle).abs() < KAPPA_ORACLE_TOL,
        format!("behavior-vs-behavior {same:.4}; deterministic target {kappa:.4} vs eigen oracle {oracle:.4}"),
    )
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let text = r#"{
        "policies": ["a", "b", "c"],
        "n_grid": [100, 200],
        "t_grid": [4, 8],
        "replicates": 3,
        "base_seed": 99,
        "oracle": {"kind": "monte_carlo", "episodes": 20000, "seed": 5}
    }"#;
    let mut files = Vec::new();
    for (run, workers) in [(0, 1), (1, 1), (2, 3)] {
        let mut cfg = ExperimentConfig::from_json_str(text).map_err(|e| e.to_string())?;
        cfg.workers = Some(workers);
        let path = dir.path().join(format!("run{run}.csv"));
        cfg.output = Some(path.clone());
        experiments::run(&cfg).map_err(|e| e.to_string())?;
        let results = std::fs::read(&path).map_err(|e| e.to_string())?;
        let summary = std::fs::read(experiments::summary_path(&path)).map_err(|e| e.to_string())?;
        files.push((results, summary));
    }
    let rows = String::from_utf8_lossy(&files[0].0).lines().count() - 1;
    check(
        files.windows(2).all(|w| w[0] == w[1]) && rows == 3 * 2 * 2 * 3,
        format!("{rows} rows, identical across two runs and across worker counts"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("mis-fqe identity", mis_fqe_identity),
        ("tabular oracle equivalence", tabular_oracles),
        ("symmetry zero", symmetry_zero),
        ("n-scaling", || {
            slope_criterion(scaling_config(vec![200, 400, 800, 1600], vec![20]), true, N_SLOPE)
        }),
        ("T-scaling", || {
            slope_criterion(scaling_config(vec![2000], vec![20, 40, 60, 80, 100]), false, T_SLOPE)
        }),
        ("loocv closed form", loocv_closed_form),
        ("basis properties", basis_properties),
        ("kappa sanity", kappa_sanity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!("criterion {} [{name}]: {tag} ({secs:.1}s) {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
