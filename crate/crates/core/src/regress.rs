//! Ridge-regularized least squares on feature designs.
//!
//! Designs are stored row-sparse: a B-spline feature vector has at most
//! `degree + 1` nonzeros, all contiguous, so every row is an offset plus a
//! short run of values. Dense matrices are accepted too (one full-width run
//! per row).
//!
//! The estimator solves `(XᵀX + nλI)β = Xᵀy`, equivalently
//! `(Σ̂ + λI)β = Xᵀy/n` with `Σ̂ = XᵀX/n`, through a Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Smallest accepted squared Cholesky pivot, relative to the largest.
const PIVOT_TOL: f64 = 1e-14;
/// Hat diagonals within this distance of 1 are treated as interpolated.
const HAT_ONE_TOL: f64 = 1e-10;

/// One design row: `values` occupy columns `offset..offset + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    offset: usize,
    values: SmallVec<[f64; 4]>,
}

impl SparseRow {
    pub fn new(offset: usize, values: SmallVec<[f64; 4]>) -> Self {
        Self { offset, values }
    }

    pub fn dense(values: &[f64]) -> Self {
        Self {
            offset: 0,
            values: SmallVec::from_slice(values),
        }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One past the last column touched.
    pub fn end(&self) -> usize {
        self.offset + self.values.len()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&v[self.offset..])
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scatter_into(&self, out: &mut [f64], scale: f64) {
        for (o, v) in out[self.offset..].iter_mut().zip(&self.values) {
            *o += scale * v;
        }
    }

    /// `out += scale·row·rowᵀ`.
    pub fn add_outer(&self, out: &mut DMatrix<f64>, scale: f64) {
        for (j, vj) in self.values.iter().enumerate() {
            for (k, vk) in self.values.iter().enumerate() {
                out[(self.offset + j, self.offset + k)] += scale * vj * vk;
            }
        }
    }

    /// `rowᵀ M row`.
    pub fn quad_form(&self, m: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for (j, vj) in self.values.iter().enumerate() {
            for (k, vk) in self.values.iter().enumerate() {
                acc += vj * m[(self.offset + j, self.offset + k)] * vk;
            }
        }
        acc
    }
}

/// An `n × D` design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    dim: usize,
    rows: Vec<SparseRow>,
}

impl Design {
    pub fn new(dim: usize, rows: Vec<SparseRow>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("design has zero columns".into()));
        }
        if rows.is_empty() {
            return Err(Error::DimensionMismatch("design has zero rows".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.end() > dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} reaches column {} of a {dim}-column design",
                    r.end()
                )));
            }
            if r.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} is not finite")));
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn from_dense(x: &DMatrix<f64>) -> Result<Self> {
        let rows = x
            .row_iter()
            .map(|r| SparseRow::dense(&r.iter().copied().collect::<Vec<_>>()))
            .collect();
        Self::new(x.ncols(), rows)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.nrows(), self.dim);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r.values.iter().enumerate() {
                x[(i, r.offset + j)] = *v;
            }
        }
        x
    }

    /// Empirical Gram matrix `Σ̂ = XᵀX/n`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        let w = 1.0 / self.nrows() as f64;
        for r in &self.rows {
            r.add_outer(&mut g, w);
        }
        g
    }

    /// `Xᵀy/n`.
    pub fn moment(&self, y: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.dim];
        let w = 1.0 / self.nrows() as f64;
        for (r, &yi) in self.rows.iter().zip(y) {
            r.scatter_into(&mut out, w * yi);
        }
        DVector::from_vec(out)
    }
}

/// How the ridge penalty λ is chosen for a Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RidgeRule {
    /// A fixed λ; `0` gives plain least squares.
    Fixed { value: f64 },
    /// `λ = scale·trace(Σ̂)/D`.
    Relative { scale: f64 },
}

impl Default for RidgeRule {
    fn default() -> Self {
        RidgeRule::Relative { scale: 1e-8 }
    }
}

impl RidgeRule {
    pub fn resolve(&self, gram: &DMatrix<f64>) -> f64 {
        match *self {
            RidgeRule::Fixed { value } => value,
            RidgeRule::Relative { scale } => scale * gram.trace() / gram.nrows() as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            RidgeRule::Fixed { value } => value,
            RidgeRule::Relative { scale } => scale,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("ridge parameter must be >= 0, got {v}")))
        }
    }
}

/// Cholesky factor of `Σ̂ + λI`.
#[derive(Debug, Clone)]
pub struct RidgeFactor {
    chol: Cholesky<f64, Dyn>,
    lambda: f64,
}

impl RidgeFactor {
    pub fn new(gram: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let d = gram.nrows();
        let a = gram + DMatrix::identity(d, d) * lambda;
        let chol = Cholesky::new(a).ok_or(Error::Singular { step: None })?;
        let diag = chol.l_dirty().diagonal();
        let max = diag.iter().fold(0.0_f64, |m, v| m.max(v * v));
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if !(min > PIVOT_TOL * max) {
            return Err(Error::Singular { step: None });
        }
        Ok(Self { chol, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(Σ̂ + λI)⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Least-squares problem `min ‖y − Xβ‖²/n + λ‖β‖²`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    design: Design,
    y: Vec<f64>,
    ridge: f64,
}

impl RegressionProblem {
    pub fn new(design: Design, y: Vec<f64>, ridge: f64) -> Result<Self> {
        if y.len() != design.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} design rows",
                y.len(),
                design.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite response".into()));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(Self { design, y, ridge })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn factor(&self) -> Result<RidgeFactor> {
        RidgeFactor::new(&self.design.gram(), self.ridge)
    }
}

/// Coefficients solving `(XᵀX + nλI)β = Xᵀy`.
pub fn solve(problem: &RegressionProblem) -> Result<DVector<f64>> {
    let factor = problem.factor()?;
    Ok(factor.solve(&problem.design.moment(&problem.y)))
}

/// Closed-form leave-one-out score and the number of samples dropped for
/// having a hat diagonal of 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoocvScore {
    pub score: f64,
    pub dropped: usize,
}

/// Exact leave-one-out mean squared error of the ridge smoother,
/// `mean_i ((y_i − ŷ_i)/(1 − h_ii))²`.
///
/// Each left-out fit keeps the full-sample penalty `nλ`, which is what
/// makes the hat-diagonal shortcut exact for λ > 0.
pub fn loocv_score(problem: &RegressionProblem) -> Result<LoocvScore> {
    let n = problem.design.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("LOOCV needs at least two samples".into()));
    }
    let factor = problem.factor()?;
    let beta = factor.solve(&problem.design.moment(&problem.y));
    let inv = factor.inverse();
    let beta = beta.as_slice();

    let mut sum = 0.0;
    let mut used = 0usize;
    for (row, &yi) in problem.design.rows.iter().zip(&problem.y) {
        let h = row.quad_form(&inv) / n as f64;
        if 1.0 - h < HAT_ONE_TOL {
            continue;
        }
        let r = (yi - row.dot(beta)) / (1.0 - h);
        sum += r * r;
        used += 1;
    }
    if used == 0 {
        return Err(Error::LoocvUndefined);
    }
    Ok(LoocvScore {
        score: sum / used as f64,
        dropped: n - used,
    })
}
