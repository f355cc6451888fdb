//! Integration against the initial state law `ρ₁`.

use gauss_quad::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{rng_from_seed, InitialLaw};
use crate::error::{Error, Result};

pub const DEFAULT_QUADRATURE_NODES: usize = 201;

/// How `∫ g dρ₁` is approximated for interval laws. Discrete laws are
/// always summed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integration {
    /// Composite Gauss–Legendre with about `nodes` nodes in total, split at
    /// the supplied breakpoints.
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for Integration {
    fn default() -> Self {
        Integration::Quadrature {
            nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

/// Weighted states `(s_q, w_q)` with `Σ w_q g(s_q) ≈ ∫ g dρ₁`.
pub fn initial_nodes(law: &InitialLaw, rule: Integration, breakpoints: &[f64]) -> Result<Vec<(f64, f64)>> {
    match law {
        InitialLaw::Discrete { pmf } => Ok(pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (s as f64, p))
            .collect()),
        &InitialLaw::Uniform { lo, hi } => match rule {
            Integration::Quadrature { nodes } => composite_gauss(lo, hi, nodes, breakpoints),
            Integration::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::InvalidArgument("Monte Carlo integration needs samples".into()));
                }
                let mut rng = rng_from_seed(seed);
                let w = 1.0 / samples as f64;
                Ok((0..samples)
                    .map(|_| (lo + (hi - lo) * rng.random::<f64>(), w))
                    .collect())
            }
        },
    }
}

/// Gauss–Legendre on each panel between consecutive breakpoints, with the
/// weights scaled by the uniform density `1/(hi − lo)`.
fn composite_gauss(lo: f64, hi: f64, nodes: usize, breakpoints: &[f64]) -> Result<Vec<(f64, f64)>> {
    if nodes < 2 {
        return Err(Error::InvalidArgument(format!("quadrature needs >= 2 nodes, got {nodes}")));
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (hi - lo));

    let panels = cuts.len() - 1;
    let order = nodes.div_ceil(panels).max(2);
    let rule = GaussLegendre::new(order).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let density = 1.0 / (hi - lo);
    let mut out = Vec::with_capacity(order * panels);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(x, wt) in rule.as_node_weight_pairs() {
            out.push((mid + half * x, wt * half * density));
        }
    }
    Ok(out)
}
