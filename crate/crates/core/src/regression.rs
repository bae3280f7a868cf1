//! Non-negative Poisson regression with the shifted-log link.
//!
//! A [`RegressionProblem`] models counts `y_t ~ Poisson(c_t·(e^{x_tᵀβ/α_t} − 1))`
//! with `β ≥ 0`. Each row and each column update of the factorization is one
//! such problem. Solvers use cyclic coordinate ascent; every coordinate takes a
//! single projected Newton step with step halving.
//!
//! Internally the solvers maximise the rate form `Σ y log λ − λ`, which differs
//! from [`RegressionProblem::loglik`] by a constant independent of `β`.
//!
//! The approximate variant keeps exact terms for non-zero responses and
//! replaces `exp` by a quadratic elsewhere. With weights `w1_t = c_t η₁/α_t`
//! and `w2_t = c_t η₂/α_t²` it needs only `g = Σ_t w1_t x_t` and
//! `H = Σ_t w2_t x_t x_tᵀ` from the zero rows, which [`Gram`] caches:
//!
//! ```text
//! Σ_{y_t>0} [h(y_t, b_t) + w1_t b_t + w2_t b_t²] − βᵀg − βᵀHβ
//! ```

use std::borrow::Cow;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::countmat::SparseSlice;
use crate::error::{Error, Result};
use crate::likelihood::{approx_correction, approx_weights, objective_term, rate_term};
use crate::link::LinkParam;
use crate::quadapprox::QuadApprox;

/// Link parameters of the observations: shared by all of them, or one per observation.
#[derive(Debug, Clone, Copy)]
pub enum Shift<'a> {
    Uniform(LinkParam),
    PerObservation(&'a [LinkParam]),
}

impl Shift<'_> {
    #[inline]
    pub fn at(&self, t: usize) -> LinkParam {
        match self {
            Shift::Uniform(p) => *p,
            Shift::PerObservation(ps) => ps[t],
        }
    }
}

/// Weighted design moments `g = Σ w1_t x_t` and `H = Σ w2_t x_t x_tᵀ` over all observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub linear: Array1<f64>,
    pub quadratic: Array2<f64>,
}

impl Gram {
    pub fn compute(design: ArrayView2<f64>, shift: &Shift, q: &QuadApprox) -> Result<Self> {
        match shift {
            Shift::Uniform(p) => Ok(Self::uniform(&column_sums(design), &cross_product(design), p, q)),
            Shift::PerObservation(ps) => {
                if ps.len() != design.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} link parameters for {} observations",
                        ps.len(),
                        design.nrows()
                    )));
                }
                let (w1, w2): (Vec<f64>, Vec<f64>) = ps.iter().map(|p| approx_weights(p, q)).unzip();
                let linear = design.t().dot(&ArrayView1::from(&w1));
                let mut weighted = design.to_owned();
                for (mut row, w) in weighted.rows_mut().into_iter().zip(&w2) {
                    row *= *w;
                }
                Ok(Self { linear, quadratic: design.t().dot(&weighted) })
            }
        }
    }

    /// Gram data for a shared link parameter from the unweighted moments
    /// `Xᵀ1` and `XᵀX`, which callers can compute once for many problems.
    pub fn uniform(column_sums: &Array1<f64>, cross: &Array2<f64>, p: &LinkParam, q: &QuadApprox) -> Self {
        let (w1, w2) = approx_weights(p, q);
        Self { linear: column_sums * w1, quadratic: cross * w2 }
    }
}

/// `Xᵀ1`.
pub fn column_sums(design: ArrayView2<f64>) -> Array1<f64> {
    design.sum_axis(Axis(0))
}

/// `XᵀX`.
pub fn cross_product(design: ArrayView2<f64>) -> Array2<f64> {
    design.t().dot(&design)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    /// Full sweeps over the coordinates.
    pub cycles: usize,
    /// Step halvings tried before a coordinate is left unchanged.
    pub max_halvings: usize,
    /// Gradients below this magnitude count as stationary.
    pub grad_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { cycles: 3, max_halvings: 30, grad_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: Array1<f64>,
    /// Optimised objective at the start and after every cycle.
    pub trace: Vec<f64>,
}

impl Solution {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the starting value")
    }
}

/// Which objective a solver or derivative refers to.
#[derive(Debug, Clone, Copy)]
pub enum Variant<'q> {
    Exact,
    Approx(&'q QuadApprox),
}

#[derive(Debug, Clone)]
pub struct RegressionProblem<'a> {
    design: ArrayView2<'a, f64>,
    response: SparseSlice<'a>,
    shift: Shift<'a>,
    gram: Option<Cow<'a, Gram>>,
}

impl<'a> RegressionProblem<'a> {
    /// `design` is N×q; `response` lists the non-zero counts by observation index.
    pub fn new(design: ArrayView2<'a, f64>, response: SparseSlice<'a>, shift: Shift<'a>) -> Result<Self> {
        let n = design.nrows();
        if let Some(&t) = response.indices.iter().find(|&&t| t >= n) {
            return Err(Error::DimensionMismatch(format!("response index {t} for {n} observations")));
        }
        if let Shift::PerObservation(ps) = shift {
            if ps.len() != n {
                return Err(Error::DimensionMismatch(format!("{} link parameters for {n} observations", ps.len())));
            }
        }
        debug_assert!(design.iter().all(|v| *v >= 0.0), "design must be non-negative");
        Ok(Self { design, response, shift, gram: None })
    }

    pub fn with_gram(mut self, gram: Cow<'a, Gram>) -> Self {
        self.gram = Some(gram);
        self
    }

    pub fn compute_gram(self, q: &QuadApprox) -> Result<Self> {
        let gram = Gram::compute(self.design, &self.shift, q)?;
        Ok(self.with_gram(Cow::Owned(gram)))
    }

    pub fn gram(&self) -> Option<&Gram> {
        self.gram.as_deref()
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.design.ncols()
    }

    fn check_beta(&self, beta: ArrayView1<f64>) -> Result<()> {
        if beta.len() != self.n_coef() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for {} columns", beta.len(), self.n_coef())));
        }
        if let Some(v) = beta.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain("beta", *v));
        }
        Ok(())
    }

    fn dense_response(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n_obs()];
        for (t, v) in self.response.iter() {
            y[t] = v as f64;
        }
        y
    }

    /// Regression log-likelihood with constants in `y` and `c` dropped;
    /// `−∞` when some `y_t > 0` has `x_tᵀβ = 0`.
    pub fn loglik(&self, beta: ArrayView1<f64>) -> Result<f64> {
        self.check_beta(beta)?;
        let b = self.design.dot(&beta);
        let y = self.dense_response();
        Ok((0..self.n_obs()).map(|t| objective_term(y[t], b[t], &self.shift.at(t))).sum())
    }

    /// The objective the solvers maximise, in rate form.
    pub fn objective(&self, beta: ArrayView1<f64>, variant: Variant) -> Result<f64> {
        self.check_beta(beta)?;
        Ok(Workspace::new(self, beta.to_owned(), variant)?.objective())
    }

    /// First and second partial derivatives of the objective in `β_j`.
    pub fn coordinate_derivatives(&self, beta: ArrayView1<f64>, j: usize, variant: Variant) -> Result<(f64, f64)> {
        self.check_beta(beta)?;
        if j >= self.n_coef() {
            return Err(Error::DimensionMismatch(format!("coordinate {j} of {}", self.n_coef())));
        }
        Ok(Workspace::new(self, beta.to_owned(), variant)?.derivatives(j))
    }

    pub fn solve_exact(&self, beta0: ArrayView1<f64>, opts: &SolverOptions) -> Result<Solution> {
        self.solve(beta0, Variant::Exact, opts)
    }

    pub fn solve_approx(&self, q: &QuadApprox, beta0: ArrayView1<f64>, opts: &SolverOptions) -> Result<Solution> {
        self.solve(beta0, Variant::Approx(q), opts)
    }

    pub fn solve(&self, beta0: ArrayView1<f64>, variant: Variant, opts: &SolverOptions) -> Result<Solution> {
        self.check_beta(beta0)?;
        let mut ws = Workspace::new(self, beta0.to_owned(), variant)?;
        let start = ws.objective();
        if !start.is_finite() {
            return Err(Error::NonFiniteStart);
        }
        let mut trace = vec![start];
        for _ in 0..opts.cycles {
            let previous = ws.beta.clone();
            let mut moved = false;
            for j in 0..self.n_coef() {
                moved |= ws.update(j, opts);
            }
            // Incremental predictors drift; a coordinate set to zero can leave
            // a tiny positive residue that hides a boundary crossing.
            ws.reset(ws.beta.clone());
            let value = ws.objective();
            let last = *trace.last().expect("trace starts non-empty");
            if !(value >= last) {
                ws.reset(previous);
                break;
            }
            trace.push(value);
            if !moved {
                break;
            }
        }
        Ok(Solution { beta: ws.beta, trace })
    }
}

/// Solver state: only the observations that carry non-constant exact terms
/// are tracked (all of them for the exact objective, the non-zero responses
/// for the approximate one).
struct Workspace<'p, 'a> {
    problem: &'p RegressionProblem<'a>,
    rows: Vec<usize>,
    y: Vec<f64>,
    params: Vec<LinkParam>,
    b: Vec<f64>,
    beta: Array1<f64>,
    approx: Option<(&'p QuadApprox, &'p Gram)>,
    h_beta: Array1<f64>,
}

impl<'p, 'a> Workspace<'p, 'a> {
    fn new(problem: &'p RegressionProblem<'a>, beta: Array1<f64>, variant: Variant<'p>) -> Result<Self> {
        let (rows, y, approx) = match variant {
            Variant::Exact => ((0..problem.n_obs()).collect(), problem.dense_response(), None),
            Variant::Approx(q) => {
                let gram = problem.gram.as_deref().ok_or(Error::MissingGram)?;
                if !(q.eta2 >= 0.0) {
                    return Err(Error::InvalidParameter(format!("approximation needs eta2 >= 0, got {}", q.eta2)));
                }
                let ys = problem.response.counts.iter().map(|&v| v as f64).collect();
                (problem.response.indices.to_vec(), ys, Some((q, gram)))
            }
        };
        let params: Vec<LinkParam> = rows.iter().map(|&t| problem.shift.at(t)).collect();
        let b = rows.iter().map(|&t| problem.design.row(t).dot(&beta)).collect();
        let h_beta = match approx {
            Some((_, gram)) => gram.quadratic.dot(&beta),
            None => Array1::zeros(0),
        };
        Ok(Self { problem, rows, y, params, b, beta, approx, h_beta })
    }

    #[inline]
    fn term(&self, t: usize, b: f64) -> f64 {
        let p = &self.params[t];
        let exact = rate_term(self.y[t], b, p);
        match self.approx {
            Some((q, _)) => exact + approx_correction(b, p, q),
            None => exact,
        }
    }

    fn objective(&self) -> f64 {
        let local: f64 = (0..self.rows.len()).map(|t| self.term(t, self.b[t])).sum();
        match self.approx {
            Some((_, gram)) => local - self.beta.dot(&gram.linear) - self.beta.dot(&self.h_beta),
            None => local,
        }
    }

    #[inline]
    fn x(&self, t: usize, j: usize) -> f64 {
        self.problem.design[[self.rows[t], j]]
    }

    fn derivatives(&self, j: usize) -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        for t in 0..self.rows.len() {
            let x = self.x(t, j);
            if x == 0.0 {
                continue;
            }
            let p = &self.params[t];
            let (c, a) = (p.c(), p.alpha());
            let z = self.b[t] / a;
            let u = z.exp();
            let (mut d1, mut d2) = if self.y[t] > 0.0 {
                let e = z.exp_m1();
                (u / a * (self.y[t] / e - c), -u / (a * a) * (self.y[t] / (e * e) + c))
            } else {
                (-c * u / a, -c * u / (a * a))
            };
            if let Some((q, _)) = self.approx {
                let (w1, w2) = approx_weights(p, q);
                d1 += w1 + 2.0 * w2 * self.b[t];
                d2 += 2.0 * w2;
            }
            g += x * d1;
            h += x * x * d2;
        }
        if let Some((_, gram)) = self.approx {
            g -= gram.linear[j] + 2.0 * self.h_beta[j];
            h -= 2.0 * gram.quadratic[[j, j]];
        }
        (g, h)
    }

    /// Objective restricted to the terms that depend on `β_j`, at `β_j = v`.
    fn coordinate_objective(&self, j: usize, v: f64) -> f64 {
        let delta = v - self.beta[j];
        let mut acc = 0.0;
        for t in 0..self.rows.len() {
            let x = self.x(t, j);
            if x != 0.0 {
                acc += self.term(t, self.b[t] + x * delta);
            }
        }
        if let Some((_, gram)) = self.approx {
            let hjj = gram.quadratic[[j, j]];
            let rest = self.h_beta[j] - hjj * self.beta[j];
            acc -= v * (gram.linear[j] + hjj * v + 2.0 * rest);
        }
        acc
    }

    /// One projected Newton step on coordinate `j`; returns whether `β_j` changed.
    fn update(&mut self, j: usize, opts: &SolverOptions) -> bool {
        let current = self.beta[j];
        let (g, h) = self.derivatives(j);
        if !g.is_finite() || !h.is_finite() || h >= 0.0 {
            return false;
        }
        if (current > 0.0 && g.abs() < opts.grad_tol) || (current == 0.0 && g <= 0.0) {
            return false;
        }
        let step = (current - g / h).max(0.0) - current;
        if step == 0.0 {
            return false;
        }
        let before = self.coordinate_objective(j, current);
        let mut scale = 1.0;
        for _ in 0..=opts.max_halvings {
            let candidate = (current + scale * step).max(0.0);
            let after = self.coordinate_objective(j, candidate);
            if after >= before {
                if candidate == current {
                    return false;
                }
                self.apply(j, candidate - current);
                return true;
            }
            scale *= 0.5;
        }
        false
    }

    /// Moves to `beta`, recomputing the predictors from scratch.
    fn reset(&mut self, beta: Array1<f64>) {
        for (t, &row) in self.rows.iter().enumerate() {
            self.b[t] = self.problem.design.row(row).dot(&beta);
        }
        if let Some((_, gram)) = self.approx {
            self.h_beta = gram.quadratic.dot(&beta);
        }
        self.beta = beta;
    }

    fn apply(&mut self, j: usize, delta: f64) {
        for t in 0..self.rows.len() {
            let x = self.x(t, j);
            if x != 0.0 {
                self.b[t] += x * delta;
            }
        }
        self.beta[j] += delta;
        if let Some((_, gram)) = self.approx {
            self.h_beta.scaled_add(delta, &gram.quadratic.column(j));
        }
    }
}
