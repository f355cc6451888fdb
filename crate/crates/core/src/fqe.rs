//! Fitted Q-evaluation over a linear sieve.
//!
//! Starting from `Q̂_{T+1} = 0`, each step regresses
//! `R_t + Σ_{a'} π_{t+1}(a' | S_{t+1}) Q̂_{t+1}(S_{t+1}, a')` on
//! `φ_K(S_t, A_t)`. The value estimate integrates `Σ_a π_1(a|s) Q̂_1(s, a)`
//! against the known initial law.

use serde::{Deserialize, Serialize};

use crate::basis::{BSplineBasis, FeatureSystem, StateBasis};
use crate::env::{EnvSpec, TrajectoryBatch};
use crate::error::{Error, Result};
use crate::integrate::{initial_nodes, Integration};
use crate::policy::PolicySpec;
use crate::regress::{Design, RidgeFactor, RidgeRule};
use crate::selection::FeaturePlan;

#[derive(Debug, Clone, PartialEq)]
pub struct FqeStep {
    pub features: FeatureSystem,
    pub lambda: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqeModel {
    ridge: RidgeRule,
    steps: Vec<FqeStep>,
    value: Option<f64>,
}

impl FqeModel {
    pub fn from_steps(ridge: RidgeRule, steps: Vec<FqeStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one step".into()));
        }
        for (t, s) in steps.iter().enumerate() {
            if s.beta.len() != s.features.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "step {}: {} coefficients for dimension {}",
                    t + 1,
                    s.beta.len(),
                    s.features.dim()
                )));
            }
        }
        Ok(Self {
            ridge,
            steps,
            value: None,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn ridge(&self) -> RidgeRule {
        self.ridge
    }

    pub fn steps(&self) -> &[FqeStep] {
        &self.steps
    }

    /// Step `t` (1-based).
    pub fn step(&self, t: usize) -> Result<&FqeStep> {
        if t == 0 || t > self.horizon() {
            return Err(Error::StepOutOfRange {
                step: t,
                horizon: self.horizon(),
            });
        }
        Ok(&self.steps[t - 1])
    }

    pub fn feature_systems(&self) -> Vec<FeatureSystem> {
        self.steps.iter().map(|s| s.features.clone()).collect()
    }

    /// Per-step `K`, averaged.
    pub fn mean_k(&self) -> f64 {
        self.steps.iter().map(|s| s.features.k() as f64).sum::<f64>() / self.horizon() as f64
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    /// `Q̂_t(s, a) = φ_K(s, a)ᵀβ_t`.
    pub fn q_value(&self, t: usize, s: f64, a: usize) -> Result<f64> {
        let step = self.step(t)?;
        Ok(step.features.feature_row(s, a)?.dot(&step.beta))
    }

    /// Plug-in value `∫ Σ_a π_1(a|s) Q̂_1(s, a) dρ₁(s)`, stored on the model.
    pub fn estimate_value(&mut self, env: &EnvSpec, target: &PolicySpec, integration: Integration) -> Result<f64> {
        let nodes = value_nodes(env, target, &self.steps[0].features, integration)?;
        let mut total = 0.0;
        for (s, w) in nodes {
            let probs = target.probs(1, s);
            let mut inner = 0.0;
            for (a, p) in probs.iter().enumerate() {
                if *p != 0.0 {
                    inner += p * self.q_value(1, s, a)?;
                }
            }
            total += w * inner;
        }
        self.value = Some(total);
        Ok(total)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (lambda, rule) = match self.ridge {
            RidgeRule::Fixed { value } => (value, "fixed"),
            RidgeRule::Relative { scale } => (scale, "relative"),
        };
        let steps: Vec<StepJson> = self
            .steps
            .iter()
            .map(|s| {
                let (degree, states) = match s.features.basis() {
                    StateBasis::Bspline(b) => (Some(b.degree()), None),
                    StateBasis::Indicator { states } => (None, Some(*states)),
                };
                StepJson {
                    k: s.features.k(),
                    knots: s.features.knots().map(<[f64]>::to_vec),
                    beta: s.beta.clone(),
                    lambda: s.lambda,
                    actions: s.features.actions(),
                    degree,
                    states,
                }
            })
            .collect();
        serde_json::to_value(ModelJson {
            horizon: self.horizon(),
            lambda,
            lambda_rule: rule.to_string(),
            steps,
            value: self.value,
        })
        .expect("model serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let m: ModelJson = serde_json::from_value(value.clone())?;
        let ridge = match m.lambda_rule.as_str() {
            "fixed" => RidgeRule::Fixed { value: m.lambda },
            "relative" => RidgeRule::Relative { scale: m.lambda },
            other => return Err(Error::Data(format!("unknown lambda_rule '{other}'"))),
        };
        let steps = m
            .steps
            .into_iter()
            .map(|s| {
                let features = match (s.knots, s.degree, s.states) {
                    (Some(knots), Some(degree), _) => {
                        FeatureSystem::bspline(BSplineBasis::new(degree, knots)?, s.actions)?
                    }
                    (None, _, Some(states)) => FeatureSystem::indicator(states, s.actions)?,
                    _ => return Err(Error::Data("step lacks a basis description".into())),
                };
                if features.k() != s.k {
                    return Err(Error::Data(format!("K = {} disagrees with the basis", s.k)));
                }
                Ok(FqeStep {
                    features,
                    lambda: s.lambda,
                    beta: s.beta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if steps.len() != m.horizon {
            return Err(Error::Data(format!("T = {} but {} steps", m.horizon, steps.len())));
        }
        let mut model = Self::from_steps(ridge, steps)?;
        model.value = m.value;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    #[serde(rename = "T")]
    horizon: usize,
    lambda: f64,
    lambda_rule: String,
    steps: Vec<StepJson>,
    value: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepJson {
    #[serde(rename = "K")]
    k: usize,
    knots: Option<Vec<f64>>,
    beta: Vec<f64>,
    lambda: f64,
    actions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<usize>,
}

/// Quadrature nodes shared by the plug-in value and the MIS weights.
pub(crate) fn value_nodes(
    env: &EnvSpec,
    target: &PolicySpec,
    first: &FeatureSystem,
    integration: Integration,
) -> Result<Vec<(f64, f64)>> {
    let mut breaks = first.breakpoints();
    breaks.extend(target.breakpoints());
    initial_nodes(env.initial(), integration, &breaks)
}

/// Step-`t` design rows `φ(S_{i,t}, A_{i,t})`.
pub(crate) fn step_design(batch: &TrajectoryBatch, t: usize, fs: &FeatureSystem) -> Result<Design> {
    let rows = (0..batch.n())
        .map(|i| fs.feature_row(batch.state(i, t), batch.action(i, t)))
        .collect::<Result<Vec<_>>>()?;
    Design::new(fs.dim(), rows)
}

fn check_inputs(batch: &TrajectoryBatch, target: &PolicySpec) -> Result<()> {
    if batch.max_action() >= target.actions() {
        return Err(Error::ActionOutOfRange {
            action: batch.max_action(),
            actions: target.actions(),
        });
    }
    Ok(())
}

fn backward_pass<F>(batch: &TrajectoryBatch, target: &PolicySpec, ridge: RidgeRule, mut features_for: F) -> Result<FqeModel>
where
    F: FnMut(usize, &[f64]) -> Result<FeatureSystem>,
{
    ridge.validate()?;
    check_inputs(batch, target)?;
    let horizon = batch.horizon();
    let n = batch.n();
    let mut steps: Vec<Option<FqeStep>> = vec![None; horizon];

    for t in (1..=horizon).rev() {
        let mut y = batch.rewards_at(t);
        if t < horizon {
            let next = steps[t].as_ref().expect("later step fitted first");
            for (i, yi) in y.iter_mut().enumerate() {
                let s_next = batch.state(i, t + 1);
                let probs = target.probs(t + 1, s_next);
                *yi += next
                    .features
                    .averaged_row(s_next, &probs)
                    .into_iter()
                    .map(|(j, v)| v * next.beta[j])
                    .sum::<f64>();
            }
        }
        let fs = features_for(t, &y).map_err(|e| e.at_step(t))?;
        if fs.actions() != target.actions() {
            return Err(Error::DimensionMismatch(format!(
                "step {t}: features have {} actions, policy {}",
                fs.actions(),
                target.actions()
            )));
        }
        let design = step_design(batch, t, &fs)?;
        let gram = design.gram();
        let lambda = ridge.resolve(&gram);
        let factor = RidgeFactor::new(&gram, lambda).map_err(|e| e.at_step(t))?;
        let beta = factor.solve(&design.moment(&y));
        debug_assert_eq!(design.nrows(), n);
        steps[t - 1] = Some(FqeStep {
            features: fs,
            lambda,
            beta: beta.as_slice().to_vec(),
        });
    }
    FqeModel::from_steps(ridge, steps.into_iter().map(Option::unwrap).collect())
}

/// Fits `Q̂_T, …, Q̂_1` with the given per-step feature systems.
pub fn fit(batch: &TrajectoryBatch, target: &PolicySpec, features: &[FeatureSystem], ridge: RidgeRule) -> Result<FqeModel> {
    if features.len() != batch.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature systems for horizon {}",
            features.len(),
            batch.horizon()
        )));
    }
    backward_pass(batch, target, ridge, |t, _| Ok(features[t - 1].clone()))
}

/// Fits with feature systems built step by step from `plan`; LOOCV
/// selection sees each step's actual regression targets.
pub fn fit_with_plan(batch: &TrajectoryBatch, target: &PolicySpec, plan: &FeaturePlan, ridge: RidgeRule) -> Result<FqeModel> {
    plan.validate()?;
    backward_pass(batch, target, ridge, |t, y| {
        plan.build(t, &batch.states_at(t), &batch.actions_at(t), y, target.actions(), ridge)
    })
}

/// Per-step feature systems with knots from each step's states; for
/// LOOCV this requires the targets and therefore a full fit.
pub fn plan_features(batch: &TrajectoryBatch, target: &PolicySpec, plan: &FeaturePlan, ridge: RidgeRule) -> Result<Vec<FeatureSystem>> {
    Ok(fit_with_plan(batch, target, plan, ridge)?.feature_systems())
}
