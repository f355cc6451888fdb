//! Marginal importance sampling form of linear FQE and the `κ̂` diagnostic.
//!
//! The weights come from pushing the initial-law feature mean forward
//! through the estimated transition operators:
//!
//! ```text
//! u_1     = E^{ρ₁, π₁}[φ]
//! z_t     = (Σ̂_t + λ_t I)⁻¹ u_t
//! ŵ_{i,t} = φ(S_{i,t}, A_{i,t})ᵀ z_t
//! u_{t+1} = (1/n) Σ_i ŵ_{i,t} g_{t+1}(S_{i,t+1}),   g_{t+1}(s) = Σ_a π_{t+1}(a|s) φ(s, a)
//! ```
//!
//! The last line is `G_tᵀ z_t` with `G_t = (1/n) Σ_i φ_{i,t} g_{t+1}(S_{i,t+1})ᵀ`.

use std::io::Write;

use nalgebra::DVector;

use crate::basis::FeatureSystem;
use crate::env::{fmt_f64, EnvSpec, TrajectoryBatch};
use crate::error::{Error, Result};
use crate::fqe::{step_design, value_nodes};
use crate::integrate::Integration;
use crate::policy::PolicySpec;
use crate::regress::{RidgeFactor, RidgeRule};

#[derive(Debug, Clone, PartialEq)]
pub struct MisWeights {
    n: usize,
    horizon: usize,
    /// `weights[(t−1)·n + i] = ŵ_{i,t}`.
    weights: Vec<f64>,
    propagated: Vec<DVector<f64>>,
}

impl MisWeights {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn weight(&self, i: usize, t: usize) -> f64 {
        self.weights[(t - 1) * self.n + i]
    }

    /// `u_t`, the propagated initial feature mean at step `t`.
    pub fn propagated(&self, t: usize) -> &DVector<f64> {
        &self.propagated[t - 1]
    }

    /// CSV `episode,t,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "t", "weight"])?;
        for i in 0..self.n {
            for t in 1..=self.horizon {
                w.write_record([i.to_string(), t.to_string(), fmt_f64(self.weight(i, t))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_features(batch: &TrajectoryBatch, features: &[FeatureSystem]) -> Result<()> {
    if features.len() != batch.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature systems for horizon {}",
            features.len(),
            batch.horizon()
        )));
    }
    if let Some(fs) = features.iter().find(|fs| batch.max_action() >= fs.actions()) {
        return Err(Error::ActionOutOfRange {
            action: batch.max_action(),
            actions: fs.actions(),
        });
    }
    Ok(())
}

fn factor_at(batch: &TrajectoryBatch, t: usize, fs: &FeatureSystem, ridge: RidgeRule) -> Result<RidgeFactor> {
    let gram = step_design(batch, t, fs)?.gram();
    RidgeFactor::new(&gram, ridge.resolve(&gram)).map_err(|e| e.at_step(t))
}

/// The implicit weights `ŵ_{i,t}` of the FQE fit with the same features,
/// ridge rule and integration rule.
pub fn compute_weights(
    batch: &TrajectoryBatch,
    target: &PolicySpec,
    features: &[FeatureSystem],
    env: &EnvSpec,
    ridge: RidgeRule,
    integration: Integration,
) -> Result<MisWeights> {
    ridge.validate()?;
    check_features(batch, features)?;
    let (n, horizon) = (batch.n(), batch.horizon());

    let mut u = vec![0.0; features[0].dim()];
    for (s, w) in value_nodes(env, target, &features[0], integration)? {
        for (j, v) in features[0].averaged_row(s, &target.probs(1, s)) {
            u[j] += w * v;
        }
    }
    let mut u = DVector::from_vec(u);

    let mut weights = Vec::with_capacity(n * horizon);
    let mut propagated = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let fs = &features[t - 1];
        let z = factor_at(batch, t, fs, ridge)?.solve(&u);
        let start = weights.len();
        for i in 0..n {
            weights.push(fs.feature_row(batch.state(i, t), batch.action(i, t))?.dot(z.as_slice()));
        }
        let next_u = (t < horizon).then(|| {
            let next = &features[t];
            let mut acc = vec![0.0; next.dim()];
            for (i, &w) in weights[start..].iter().enumerate() {
                let s = batch.state(i, t + 1);
                for (j, v) in next.averaged_row(s, &target.probs(t + 1, s)) {
                    acc[j] += w * v;
                }
            }
            DVector::from_iterator(acc.len(), acc.into_iter().map(|x| x / n as f64))
        });
        propagated.push(std::mem::replace(&mut u, next_u.unwrap_or_else(|| DVector::zeros(0))));
    }
    Ok(MisWeights {
        n,
        horizon,
        weights,
        propagated,
    })
}

/// `Σ_t (1/n) Σ_i ŵ_{i,t} R_{i,t}`.
pub fn mis_value(batch: &TrajectoryBatch, weights: &MisWeights) -> Result<f64> {
    if batch.n() != weights.n || batch.horizon() != weights.horizon {
        return Err(Error::DimensionMismatch("weights do not match the batch".into()));
    }
    let mut total = 0.0;
    for t in 1..=batch.horizon() {
        let step: f64 = (0..batch.n()).map(|i| weights.weight(i, t) * batch.reward(i, t)).sum();
        total += step / batch.n() as f64;
    }
    Ok(total)
}

/// Plug-in distribution-shift coefficient over the linear class,
/// `(1/T) Σ_t m_tᵀ(Σ̂_t + λ_t I)⁻¹ m_t`, where `m_t` is the target-policy
/// feature mean (from `pi_batch`) and `Σ̂_t` the behavior Gram matrix
/// (from `b_batch`).
pub fn kappa_hat(
    pi_batch: &TrajectoryBatch,
    b_batch: &TrajectoryBatch,
    features: &[FeatureSystem],
    ridge: RidgeRule,
) -> Result<f64> {
    ridge.validate()?;
    if pi_batch.horizon() != b_batch.horizon() {
        return Err(Error::DimensionMismatch("batches have different horizons".into()));
    }
    check_features(b_batch, features)?;
    check_features(pi_batch, features)?;
    let horizon = b_batch.horizon();
    let mut total = 0.0;
    for t in 1..=horizon {
        let fs = &features[t - 1];
        let m = step_design(pi_batch, t, fs)?.moment(&vec![1.0; pi_batch.n()]);
        let z = factor_at(b_batch, t, fs, ridge)?.solve(&m);
        total += m.dot(&z);
    }
    Ok(total / horizon as f64)
}
