//! Time-indexed stochastic policies `π_t(· | s)`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::env::{check_pmf, EnvSpec, TransitionCurve};
use crate::error::{Error, Result};

pub type ActionProbs = SmallVec<[f64; 4]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Every action equally likely. This is both the behavior policy and
    /// target (a) of the continuous environment.
    Uniform { actions: usize },
    /// `P(a = 1 | s) = exp f(s) / (1 + exp f(s))`, target (b).
    Logistic { f: TransitionCurve },
    /// `P(a = 1 | s) = 1{f(s) > 0}`, target (c).
    Threshold { f: TransitionCurve },
    /// Explicit tables `steps[t−1][s][a]`; a single table applies to every step.
    Tabular { steps: Vec<Vec<Vec<f64>>> },
}

impl PolicySpec {
    pub fn behavior(actions: usize) -> Self {
        PolicySpec::Uniform { actions }
    }

    /// Resolves `behavior`, `a`, `b` or `c` against an environment.
    pub fn preset(name: &str, env: &EnvSpec) -> Result<Self> {
        let curve = || {
            env.curve().cloned().ok_or_else(|| {
                Error::InvalidPolicy(format!("policy '{name}' needs the continuous environment"))
            })
        };
        match name {
            "behavior" | "a" => Ok(PolicySpec::Uniform {
                actions: env.actions(),
            }),
            "b" => Ok(PolicySpec::Logistic { f: curve()? }),
            "c" => Ok(PolicySpec::Threshold { f: curve()? }),
            other => Err(Error::InvalidPolicy(format!("unknown policy preset '{other}'"))),
        }
    }

    pub fn tabular(steps: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if steps.is_empty() || steps[0].is_empty() {
            return Err(Error::InvalidPolicy("empty policy table".into()));
        }
        let (ns, na) = (steps[0].len(), steps[0][0].len());
        for (t, table) in steps.iter().enumerate() {
            if table.len() != ns {
                return Err(Error::InvalidPolicy(format!("step {} has the wrong state count", t + 1)));
            }
            for (s, row) in table.iter().enumerate() {
                if row.len() != na {
                    return Err(Error::InvalidPolicy(format!("row ({}, {s}) has the wrong length", t + 1)));
                }
                check_pmf(row, &format!("policy row ({}, {s})", t + 1))
                    .map_err(|e| Error::InvalidPolicy(e.to_string()))?;
            }
        }
        Ok(PolicySpec::Tabular { steps })
    }

    pub fn actions(&self) -> usize {
        match self {
            PolicySpec::Uniform { actions } => *actions,
            PolicySpec::Logistic { .. } | PolicySpec::Threshold { .. } => 2,
            PolicySpec::Tabular { steps } => steps[0][0].len(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, PolicySpec::Uniform { .. })
    }

    /// `π_t(· | s)` for 1-based step `t`.
    pub fn probs(&self, t: usize, s: f64) -> ActionProbs {
        match self {
            PolicySpec::Uniform { actions } => SmallVec::from_elem(1.0 / *actions as f64, *actions),
            PolicySpec::Logistic { f } => {
                let p1 = 1.0 / (1.0 + (-f.eval(s)).exp());
                SmallVec::from_slice(&[1.0 - p1, p1])
            }
            PolicySpec::Threshold { f } => {
                if f.eval(s) > 0.0 {
                    SmallVec::from_slice(&[0.0, 1.0])
                } else {
                    SmallVec::from_slice(&[1.0, 0.0])
                }
            }
            PolicySpec::Tabular { steps } => {
                let table = &steps[(t - 1).min(steps.len() - 1)];
                let si = crate::basis::indicator_index(s, table.len());
                SmallVec::from_slice(&table[si])
            }
        }
    }

    /// Points where `π_1(· | s)` loses smoothness, for composite quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PolicySpec::Uniform { .. } | PolicySpec::Tabular { .. } => Vec::new(),
            PolicySpec::Logistic { f } => f.basis().breakpoints(),
            PolicySpec::Threshold { f } => {
                let mut b = f.basis().breakpoints();
                b.extend(f.roots());
                b
            }
        }
    }

    pub fn check_compatible(&self, env: &EnvSpec) -> Result<()> {
        if self.actions() != env.actions() {
            return Err(Error::InvalidPolicy(format!(
                "policy has {} actions, environment has {}",
                self.actions(),
                env.actions()
            )));
        }
        if let PolicySpec::Tabular { steps } = self {
            match env.state_count() {
                Some(ns) if ns == steps[0].len() => {}
                _ => {
                    return Err(Error::InvalidPolicy(
                        "tabular policy does not match the environment's states".into(),
                    ))
                }
            }
            if steps.len() != 1 && steps.len() < env.horizon() {
                return Err(Error::InvalidPolicy(format!(
                    "{} policy tables for horizon {}",
                    steps.len(),
                    env.horizon()
                )));
            }
        }
        Ok(())
    }
}
