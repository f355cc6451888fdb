//! Choosing the number of basis functions `K`.

use serde::{Deserialize, Serialize};

use crate::basis::{knots_from_sorted, BSplineBasis, FeatureSystem, DEFAULT_DEGREE};
use crate::error::{Error, Result};
use crate::regress::{loocv_score, Design, RegressionProblem, RidgeRule};

/// Default LOOCV candidates, before trimming to `[degree + 1, n/10]`.
pub const DEFAULT_CANDIDATES: [usize; 8] = [4, 6, 8, 11, 14, 18, 23, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KRule {
    Fixed { k: usize },
    /// `K = round(c·n^exponent)`, at least `degree + 1`.
    RuleOfThumb { c: f64, exponent: f64 },
    /// Per-step leave-one-out selection; `None` uses [`default_candidates`].
    Loocv {
        #[serde(default)]
        candidates: Option<Vec<usize>>,
    },
}

impl KRule {
    /// `K = 3·n^{1/5}`.
    pub fn rule_of_thumb() -> Self {
        KRule::RuleOfThumb { c: 3.0, exponent: 0.2 }
    }

    pub fn label(&self) -> String {
        match self {
            KRule::Fixed { k } => format!("fixed:{k}"),
            KRule::RuleOfThumb { c, exponent } => format!("rot:{c}:{exponent}"),
            KRule::Loocv { .. } => "loocv".to_string(),
        }
    }

    pub fn validate(&self, degree: usize) -> Result<()> {
        let min = degree + 1;
        match self {
            KRule::Fixed { k } if *k < min => Err(Error::InvalidArgument(format!("K = {k} < {min}"))),
            KRule::RuleOfThumb { c, exponent } if !(c.is_finite() && exponent.is_finite() && *c > 0.0) => {
                Err(Error::InvalidArgument("rule of thumb needs finite c > 0".into()))
            }
            KRule::Loocv { candidates: Some(c) } if c.is_empty() || c.iter().any(|&k| k < min) => Err(
                Error::InvalidArgument(format!("LOOCV candidates must be nonempty and >= {min}")),
            ),
            _ => Ok(()),
        }
    }
}

/// `K` for the non-adaptive rules; `None` for LOOCV.
pub fn resolve_k(rule: &KRule, n: usize, degree: usize) -> Option<usize> {
    match *rule {
        KRule::Fixed { k } => Some(k),
        KRule::RuleOfThumb { c, exponent } => {
            let k = (c * (n as f64).powf(exponent)).round();
            Some((k.max(0.0) as usize).max(degree + 1))
        }
        KRule::Loocv { .. } => None,
    }
}

/// [`DEFAULT_CANDIDATES`] restricted to `[degree + 1, n/10]`, or the
/// smallest admissible `K` when nothing survives.
pub fn default_candidates(n: usize, degree: usize) -> Vec<usize> {
    let min = degree + 1;
    let max = n / 10;
    let c: Vec<usize> = DEFAULT_CANDIDATES
        .iter()
        .copied()
        .filter(|&k| k >= min && k <= max)
        .collect();
    if c.is_empty() {
        vec![min]
    } else {
        c
    }
}

/// Picks the candidate `K` with the smallest closed-form LOOCV score for
/// the regression of `y` on `φ_K(states, actions)`. Knots come from
/// `states`; ties go to the smaller `K`.
pub fn select_k_loocv(
    states: &[f64],
    y: &[f64],
    actions: &[usize],
    action_count: usize,
    candidates: &[usize],
    ridge: RidgeRule,
    degree: usize,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no LOOCV candidates".into()));
    }
    if states.len() != y.len() || states.len() != actions.len() {
        return Err(Error::DimensionMismatch("states, targets and actions differ in length".into()));
    }
    let mut sorted = states.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_unstable();
    order.dedup();

    let mut best: Option<(usize, f64)> = None;
    for k in order {
        let Ok(fs) = knots_from_sorted(&sorted, k, degree)
            .and_then(|knots| BSplineBasis::new(degree, knots))
            .and_then(|b| FeatureSystem::bspline(b, action_count))
        else {
            continue;
        };
        let score = (|| {
            let rows = states
                .iter()
                .zip(actions)
                .map(|(&s, &a)| fs.feature_row(s, a))
                .collect::<Result<Vec<_>>>()?;
            let design = Design::new(fs.dim(), rows)?;
            let lambda = ridge.resolve(&design.gram());
            loocv_score(&RegressionProblem::new(design, y.to_vec(), lambda)?)
        })();
        let Ok(score) = score else {
            log::debug!("LOOCV candidate K = {k} failed: {:?}", score.err());
            continue;
        };
        if best.is_none_or(|(_, s)| score.score < s) {
            best = Some((k, score.score));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::NoValidCandidate { step: 0 })
}

/// How each step's [`FeatureSystem`] is built during the backward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeaturePlan {
    /// Splines with knots at the step's state percentiles.
    Spline {
        #[serde(default = "default_degree")]
        degree: usize,
        rule: KRule,
    },
    Indicator { states: usize },
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}

impl FeaturePlan {
    pub fn cubic(rule: KRule) -> Self {
        FeaturePlan::Spline {
            degree: DEFAULT_DEGREE,
            rule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeaturePlan::Spline { degree, rule } => rule.validate(*degree),
            FeaturePlan::Indicator { states } if *states == 0 => {
                Err(Error::InvalidArgument("indicator basis needs states".into()))
            }
            FeaturePlan::Indicator { .. } => Ok(()),
        }
    }

    /// Feature system for step `t` given that step's states, actions and
    /// regression targets.
    pub fn build(
        &self,
        t: usize,
        states: &[f64],
        actions: &[usize],
        y: &[f64],
        action_count: usize,
        ridge: RidgeRule,
    ) -> Result<FeatureSystem> {
        match self {
            FeaturePlan::Indicator { states: ns } => FeatureSystem::indicator(*ns, action_count),
            FeaturePlan::Spline { degree, rule } => {
                let k = match (resolve_k(rule, states.len(), *degree), rule) {
                    (Some(k), _) => k,
                    (None, KRule::Loocv { candidates }) => {
                        let defaults;
                        let cands = match candidates {
                            Some(c) => c.as_slice(),
                            None => {
                                defaults = default_candidates(states.len(), *degree);
                                &defaults
                            }
                        };
                        select_k_loocv(states, y, actions, action_count, cands, ridge, *degree)
                            .map_err(|e| match e {
                                Error::NoValidCandidate { .. } => Error::NoValidCandidate { step: t },
                                other => other,
                            })?
                    }
                    (None, _) => unreachable!("only LOOCV defers K"),
                };
                FeatureSystem::bspline(BSplineBasis::from_samples(states, k, *degree)?, action_count)
            }
        }
    }
}
