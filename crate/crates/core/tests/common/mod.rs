//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fqe_sieve::env::{make_tabular_env, EnvSpec, TrajectoryBatch};
use fqe_sieve::policy::PolicySpec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A pmf with every entry at least `floor / len`.
pub fn random_pmf(rng: &mut impl Rng, len: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + floor).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_tabular_env(rng: &mut impl Rng, states: usize, actions: usize, horizon: usize) -> EnvSpec {
    let transitions = (0..states)
        .map(|_| (0..actions).map(|_| random_pmf(rng, states, 0.1)).collect())
        .collect();
    let rewards = (0..states)
        .map(|_| (0..actions).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    make_tabular_env(transitions, rewards, random_pmf(rng, states, 0.3), horizon).unwrap()
}

pub fn random_tabular_policy(rng: &mut impl Rng, states: usize, actions: usize) -> PolicySpec {
    PolicySpec::tabular(vec![(0..states).map(|_| random_pmf(rng, actions, 0.05)).collect()]).unwrap()
}

/// Backward DP on the per-step empirical model: `P̂_t(s'|s,a)` and
/// `R̂_t(s,a)` are sample frequencies and means at step `t`.
pub fn empirical_model_value(batch: &TrajectoryBatch, env: &EnvSpec, target: &PolicySpec) -> f64 {
    let ns = env.state_count().unwrap();
    let na = env.actions();
    let horizon = batch.horizon();
    let mut v_next = vec![0.0; ns];
    for t in (1..=horizon).rev() {
        let mut count = vec![vec![0.0; na]; ns];
        let mut reward = vec![vec![0.0; na]; ns];
        let mut cont = vec![vec![0.0; na]; ns];
        for i in 0..batch.n() {
            let (s, a) = (batch.state(i, t) as usize, batch.action(i, t));
            count[s][a] += 1.0;
            reward[s][a] += batch.reward(i, t);
            cont[s][a] += v_next[batch.state(i, t + 1) as usize];
        }
        v_next = (0..ns)
            .map(|s| {
                let probs = target.probs(t, s as f64);
                (0..na)
                    .map(|a| {
                        assert!(count[s][a] > 0.0, "cell ({s}, {a}) unobserved at step {t}");
                        probs[a] * (reward[s][a] + cont[s][a]) / count[s][a]
                    })
                    .sum()
            })
            .collect();
    }
    match env.initial() {
        fqe_sieve::env::InitialLaw::Discrete { pmf } => pmf.iter().zip(&v_next).map(|(p, v)| p * v).sum(),
        _ => unreachable!("tabular env has a discrete initial law"),
    }
}

/// Exact value from the true model.
pub fn true_model_value(env: &EnvSpec, target: &PolicySpec) -> f64 {
    let q = env.tabular().unwrap().q_functions(target, env.horizon());
    let fqe_sieve::env::InitialLaw::Discrete { pmf } = env.initial() else {
        unreachable!()
    };
    pmf.iter()
        .enumerate()
        .map(|(s, p)| {
            let probs = target.probs(1, s as f64);
            p * q[0][s].iter().zip(probs.iter()).map(|(q, w)| q * w).sum::<f64>()
        })
        .sum()
}

/// `max_f (E^π f)² / E^b f²` over functions on the state–action grid, as
/// the top eigenvalue of `Σ^{-1/2} m mᵀ Σ^{-1/2}`.
pub fn shift_eigen_oracle(target_mean: &DVector<f64>, behavior_gram: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(behavior_gram.clone());
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let v = &inv_sqrt * target_mean;
    let m = &v * v.transpose();
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
