//! Sieve bases for the state variable and the action-blocked feature map.
//!
//! A [`FeatureSystem`] pairs a state basis `Ψ_K` (clamped B-splines or
//! one-hot indicators) with a finite action set. The feature vector of a
//! state-action pair places `Ψ_K(s)` in the block of its action and zeros
//! elsewhere, so the full dimension is `K·|A|`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::regress::SparseRow;

/// Cubic splines are the default sieve.
pub const DEFAULT_DEGREE: usize = 3;

const KNOT_NUDGE: f64 = 1e-12;

/// Quantile of already sorted samples, interpolating linearly between
/// order statistics (position `p·(n−1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds a clamped knot vector with `k − degree − 1` interior knots at
/// evenly spaced sample percentiles `j/(m+1)`.
///
/// Boundary knots sit just outside the sample range, at
/// `min − ε` and `max + ε` with `ε = 1e-9·(max − min + 1)`, each repeated
/// `degree + 1` times. Tied quantiles are pushed apart by `j·1e-12` so the
/// interior stays strictly increasing.
pub fn build_knots(samples: &[f64], k: usize, degree: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidBasis("no samples to place knots".into()));
    }
    if k < degree + 1 {
        return Err(Error::InvalidBasis(format!(
            "K = {k} is too small for degree {degree} (need at least {})",
            degree + 1
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidBasis("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    knots_from_sorted(&sorted, k, degree)
}

pub(crate) fn knots_from_sorted(sorted: &[f64], k: usize, degree: usize) -> Result<Vec<f64>> {
    if k < degree + 1 {
        return Err(Error::InvalidBasis(format!(
            "K = {k} is too small for degree {degree}"
        )));
    }
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let eps = 1e-9 * (max - min + 1.0);
    let (lo, hi) = (min - eps, max + eps);
    let m = k - degree - 1;

    let mut knots = Vec::with_capacity(k + degree + 1);
    knots.extend(std::iter::repeat_n(lo, degree + 1));
    let mut prev = lo;
    for j in 1..=m {
        let mut q = quantile_sorted(sorted, j as f64 / (m + 1) as f64);
        if q <= prev {
            q = prev + j as f64 * KNOT_NUDGE;
        }
        knots.push(q);
        prev = q;
    }
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    Ok(knots)
}

/// A clamped B-spline basis on `[knots[0], knots[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidBasis(format!(
                "{} knots cannot form a clamped degree-{p} basis",
                knots.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidBasis("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidBasis("knot vector must be nondecreasing".into()));
        }
        let last = knots.len() - 1;
        let clamped = knots[..=p].iter().all(|&t| t == knots[0])
            && knots[last - p..].iter().all(|&t| t == knots[last]);
        if !clamped {
            return Err(Error::InvalidBasis(format!(
                "boundary knots must repeat {} times",
                p + 1
            )));
        }
        if knots[p] >= knots[last - p] {
            return Err(Error::InvalidBasis("empty knot span".into()));
        }
        // Interior knots of multiplicity > p would disconnect the basis.
        let interior = &knots[p + 1..last - p];
        if interior.windows(2).any(|w| w[1] <= w[0])
            || interior.first().is_some_and(|&t| t <= knots[0])
            || interior.last().is_some_and(|&t| t >= knots[last])
        {
            return Err(Error::InvalidBasis("interior knots must be strictly increasing".into()));
        }
        Ok(Self { degree, knots })
    }

    /// `count` basis functions over `[lo, hi]` with equally spaced interior knots.
    pub fn clamped_uniform(lo: f64, hi: f64, count: usize, degree: usize) -> Result<Self> {
        if count < degree + 1 || !(lo < hi) {
            return Err(Error::InvalidBasis(format!(
                "cannot build {count} degree-{degree} splines on [{lo}, {hi}]"
            )));
        }
        let m = count - degree - 1;
        let mut knots = vec![lo; degree + 1];
        knots.extend((1..=m).map(|j| lo + (hi - lo) * j as f64 / (m + 1) as f64));
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Self::new(degree, knots)
    }

    /// Knots at sample percentiles; see [`build_knots`].
    pub fn from_samples(samples: &[f64], k: usize, degree: usize) -> Result<Self> {
        Self::new(degree, build_knots(samples, k, degree)?)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Distinct knot locations, boundaries included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &t in &self.knots {
            if out.last() != Some(&t) {
                out.push(t);
            }
        }
        out
    }

    /// Greville abscissae; coefficients equal to them reproduce `s ↦ s`.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.len())
            .map(|j| {
                if p == 0 {
                    self.knots[j]
                } else {
                    self.knots[j + 1..=j + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.len() - 1;
        if x >= self.knots[n + 1] {
            return n;
        }
        if x <= self.knots[p] {
            return p;
        }
        // last i in [p, n] with knots[i] <= x
        let idx = self.knots[p..=n + 1].partition_point(|&t| t <= x);
        p + idx - 1
    }

    /// Index of the first nonzero function and the `degree + 1` values
    /// starting there. `x` is clamped to the span first.
    pub fn nonzero(&self, x: f64) -> (usize, SmallVec<[f64; 4]>) {
        let p = self.degree;
        let (lo, hi) = self.span();
        let x = x.clamp(lo, hi);
        let i = self.find_span(x);

        let mut n: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, p + 1);
        let mut left: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, p + 1);
        let mut right: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, p + 1);
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[i + 1 - j];
            right[j] = self.knots[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (i - p, n)
    }

    /// All basis values at `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let (start, vals) = self.nonzero(x);
        out[start..start + vals.len()].copy_from_slice(&vals);
        out
    }

    /// Spline value `Σ_k c_k ψ_k(x)`.
    pub fn combine(&self, coefficients: &[f64], x: f64) -> f64 {
        debug_assert_eq!(coefficients.len(), self.len());
        let (start, vals) = self.nonzero(x);
        vals.iter()
            .zip(&coefficients[start..])
            .map(|(v, c)| v * c)
            .sum()
    }
}

/// State basis `Ψ_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateBasis {
    Bspline(BSplineBasis),
    /// One-hot over states `0..states`; a state value is rounded to its index.
    Indicator { states: usize },
}

impl StateBasis {
    pub fn len(&self) -> usize {
        match self {
            StateBasis::Bspline(b) => b.len(),
            StateBasis::Indicator { states } => *states,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn nonzero(&self, s: f64) -> (usize, SmallVec<[f64; 4]>) {
        match self {
            StateBasis::Bspline(b) => b.nonzero(s),
            StateBasis::Indicator { states } => {
                (indicator_index(s, *states), SmallVec::from_elem(1.0, 1))
            }
        }
    }
}

pub(crate) fn indicator_index(s: f64, states: usize) -> usize {
    let r = s.round();
    if r <= 0.0 || r.is_nan() {
        0
    } else {
        (r as usize).min(states - 1)
    }
}

/// `Ψ_K` together with the action count; the feature dimension is `K·|A|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSystem {
    basis: StateBasis,
    actions: usize,
}

impl FeatureSystem {
    pub fn new(basis: StateBasis, actions: usize) -> Result<Self> {
        if actions == 0 {
            return Err(Error::InvalidBasis("need at least one action".into()));
        }
        if basis.is_empty() {
            return Err(Error::InvalidBasis("empty state basis".into()));
        }
        Ok(Self { basis, actions })
    }

    pub fn bspline(basis: BSplineBasis, actions: usize) -> Result<Self> {
        Self::new(StateBasis::Bspline(basis), actions)
    }

    pub fn indicator(states: usize, actions: usize) -> Result<Self> {
        Self::new(StateBasis::Indicator { states }, actions)
    }

    pub fn basis(&self) -> &StateBasis {
        &self.basis
    }

    /// Basis functions per action.
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn dim(&self) -> usize {
        self.k() * self.actions
    }

    pub fn knots(&self) -> Option<&[f64]> {
        match &self.basis {
            StateBasis::Bspline(b) => Some(b.knots()),
            StateBasis::Indicator { .. } => None,
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.basis {
            StateBasis::Bspline(b) => b.breakpoints(),
            StateBasis::Indicator { .. } => Vec::new(),
        }
    }

    /// `Ψ_K(s)`.
    pub fn eval_state_basis(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        let (start, vals) = self.basis.nonzero(s);
        out[start..start + vals.len()].copy_from_slice(&vals);
        out
    }

    /// Dense `φ_K(s, a)` with zero-based action blocks.
    pub fn feature_map(&self, s: f64, a: usize) -> Result<Vec<f64>> {
        let row = self.feature_row(s, a)?;
        let mut out = vec![0.0; self.dim()];
        row.scatter_into(&mut out, 1.0);
        Ok(out)
    }

    /// Sparse `φ_K(s, a)`.
    pub fn feature_row(&self, s: f64, a: usize) -> Result<SparseRow> {
        if a >= self.actions {
            return Err(Error::ActionOutOfRange {
                action: a,
                actions: self.actions,
            });
        }
        let (start, values) = self.basis.nonzero(s);
        Ok(SparseRow::new(a * self.k() + start, values))
    }

    /// `Σ_a probs[a]·φ_K(s, a)`, the policy-averaged feature at `s`.
    pub fn averaged_row(&self, s: f64, probs: &[f64]) -> Vec<(usize, f64)> {
        debug_assert_eq!(probs.len(), self.actions);
        let (start, values) = self.basis.nonzero(s);
        let mut out = Vec::with_capacity(values.len() * self.actions);
        for (a, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let offset = a * self.k() + start;
            out.extend(values.iter().enumerate().map(|(j, v)| (offset + j, p * v)));
        }
        out
    }
}
