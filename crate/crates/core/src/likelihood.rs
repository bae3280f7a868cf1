//! Log-likelihoods of the log1p NMF model.
//!
//! Two normalisations are provided for the shifted-log link:
//!
//! * [`exact_loglik`] is the objective with every constant in `Y` and `c`
//!   dropped, `Σ y·log(e^{b/α} − 1) − c·e^{b/α}`.
//! * [`poisson_loglik`] is the Poisson log-likelihood in rate form,
//!   `Σ y·log λ − λ` (only `log y!` dropped). It differs from
//!   [`exact_loglik`] by `Σ y·log c + c`, is comparable across values of `c`,
//!   and tends to [`identity_loglik`] as `c → ∞`.
//!
//! [`approx_loglik`] replaces `exp` by a quadratic on the zero entries and is
//! evaluated in `O((ω + n + m)K + (n + m)K²)` using
//! `Σ_ij b_ij = Σ_k (Σ_i l_ik)(Σ_j f_jk)` and `Σ_ij b_ij² = tr(F LᵀL Fᵀ)`.
//!
//! Boundary violations (`b_ij = 0` where `y_ij > 0`) evaluate to `−∞` rather
//! than an error; [`boundary_violation`] locates the offending entry.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::countmat::CountMatrix;
use crate::error::{Error, Result};
use crate::link::{Link, LinkParam};
use crate::quadapprox::QuadApprox;

/// Non-negative loadings `L` (n×K), factors `F` (m×K), link and per-row size factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub loadings: Array2<f64>,
    pub factors: Array2<f64>,
    pub link: Link,
    pub size_factors: Array1<f64>,
}

impl FactorModel {
    pub fn new(loadings: Array2<f64>, factors: Array2<f64>, link: Link) -> Result<Self> {
        let n = loadings.nrows();
        Self::with_size_factors(loadings, factors, link, Array1::ones(n))
    }

    pub fn with_size_factors(
        loadings: Array2<f64>,
        factors: Array2<f64>,
        link: Link,
        size_factors: Array1<f64>,
    ) -> Result<Self> {
        if loadings.ncols() != factors.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "L has {} columns but F has {}",
                loadings.ncols(),
                factors.ncols()
            )));
        }
        if size_factors.len() != loadings.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} size factors for {} rows",
                size_factors.len(),
                loadings.nrows()
            )));
        }
        if let Some(v) = loadings.iter().chain(factors.iter()).find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("loadings and factors", *v));
        }
        if let Some(v) = size_factors.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain("size factors", *v));
        }
        Ok(Self { loadings, factors, link, size_factors })
    }

    pub fn n_rows(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.factors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.loadings.ncols()
    }

    /// `b_ij = Σ_k l_ik f_jk`.
    pub fn linear_predictor(&self, i: usize, j: usize) -> f64 {
        self.loadings.row(i).dot(&self.factors.row(j))
    }

    /// Per-row link parameters `c·s_i`; `None` for the identity link.
    pub fn row_params(&self) -> Option<Vec<LinkParam>> {
        match self.link {
            Link::ShiftedLog(p) => {
                Some(self.size_factors.iter().map(|&s| p.scaled(s).expect("positive size factor")).collect())
            }
            Link::Identity => None,
        }
    }

    /// Expected counts `λ_ij` as a dense matrix.
    pub fn rates(&self) -> Array2<f64> {
        let mut b = self.loadings.dot(&self.factors.t());
        match self.row_params() {
            Some(params) => {
                for (mut row, p) in b.rows_mut().into_iter().zip(&params) {
                    row.mapv_inplace(|v| p.rate(v));
                }
            }
            None => {
                for (mut row, &s) in b.rows_mut().into_iter().zip(&self.size_factors) {
                    row.mapv_inplace(|v| s * v);
                }
            }
        }
        b
    }

    fn check_dims(&self, y: &CountMatrix) -> Result<()> {
        if y.n_rows() != self.n_rows() || y.n_cols() != self.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "data is {}x{} but model is {}x{}",
                y.n_rows(),
                y.n_cols(),
                self.n_rows(),
                self.n_cols()
            )));
        }
        Ok(())
    }

    fn shifted_params(&self) -> Result<Vec<LinkParam>> {
        self.row_params()
            .ok_or_else(|| Error::InvalidParameter("this log-likelihood needs a finite shifted-log link".into()))
    }
}

/// One entry of the constant-free objective: `y·log(e^x − 1) − c·e^x`, `x = b/α`.
#[inline]
pub(crate) fn objective_term(y: f64, b: f64, p: &LinkParam) -> f64 {
    let x = b / p.alpha();
    let tail = -p.c() * x.exp();
    if y > 0.0 {
        y * x.exp_m1().ln() + tail
    } else {
        tail
    }
}

/// One entry of the rate-form log-likelihood: `y·log λ − λ`, `λ = c·(e^x − 1)`.
#[inline]
pub(crate) fn rate_term(y: f64, b: f64, p: &LinkParam) -> f64 {
    let lambda = p.rate(b);
    if y > 0.0 {
        y * lambda.ln() - lambda
    } else {
        -lambda
    }
}

/// Sums `term(y_ij, b_ij, p_i)` over every entry, rows in parallel and reduced in row order.
fn dense_sum(
    y: &CountMatrix,
    loadings: ArrayView2<f64>,
    factors: ArrayView2<f64>,
    term: impl Fn(usize, f64, f64) -> f64 + Sync,
) -> f64 {
    let m = factors.nrows();
    let row_totals: Vec<f64> = (0..loadings.nrows())
        .into_par_iter()
        .map(|i| {
            let l = loadings.row(i);
            let row = y.row(i);
            let mut next = 0;
            let mut acc = 0.0;
            for j in 0..m {
                let b = l.dot(&factors.row(j));
                let count = if next < row.len() && row.indices[next] == j {
                    next += 1;
                    row.counts[next - 1] as f64
                } else {
                    0.0
                };
                acc += term(i, count, b);
            }
            acc
        })
        .collect();
    row_totals.iter().sum()
}

/// Constant-free log1p NMF log-likelihood, `O(nmK)`.
pub fn exact_loglik(y: &CountMatrix, model: &FactorModel) -> Result<f64> {
    model.check_dims(y)?;
    let params = model.shifted_params()?;
    Ok(dense_sum(y, model.loadings.view(), model.factors.view(), |i, count, b| objective_term(count, b, &params[i])))
}

/// Poisson log-likelihood `Σ y log λ − λ` for either link.
pub fn poisson_loglik(y: &CountMatrix, model: &FactorModel) -> Result<f64> {
    model.check_dims(y)?;
    match model.row_params() {
        Some(params) => {
            Ok(dense_sum(y, model.loadings.view(), model.factors.view(), |i, count, b| rate_term(count, b, &params[i])))
        }
        None => identity_loglik(y, &model.loadings, &model.factors, model.size_factors.view()),
    }
}

/// Identity-link Poisson log-likelihood with `λ_ij = s_i·(LFᵀ)_ij`, in
/// `O((ω + n + m)K)`.
pub fn identity_loglik(
    y: &CountMatrix,
    loadings: &Array2<f64>,
    factors: &Array2<f64>,
    size_factors: ArrayView1<f64>,
) -> Result<f64> {
    if y.n_rows() != loadings.nrows() || y.n_cols() != factors.nrows() || loadings.ncols() != factors.ncols() {
        return Err(Error::DimensionMismatch("identity log-likelihood inputs".into()));
    }
    if size_factors.len() != y.n_rows() {
        return Err(Error::DimensionMismatch("size factors".into()));
    }
    let factor_sums = factors.sum_axis(ndarray::Axis(0));
    let mut total = 0.0;
    for i in 0..y.n_rows() {
        let l = loadings.row(i);
        let s = size_factors[i];
        let mut acc = -s * l.dot(&factor_sums);
        for (j, count) in y.row(i).iter() {
            acc += count as f64 * (s * l.dot(&factors.row(j))).ln();
        }
        total += acc;
    }
    Ok(total)
}

/// Per-row weights of the approximated linear and quadratic terms:
/// `(c_i·η₁/α_i, c_i·η₂/α_i²)`.
#[inline]
pub(crate) fn approx_weights(p: &LinkParam, q: &QuadApprox) -> (f64, f64) {
    let a = p.alpha();
    (p.c() * q.eta1 / a, p.c() * q.eta2 / (a * a))
}

/// Linear and quadratic terms that the approximation subtracts at every entry.
#[inline]
pub(crate) fn approx_correction(b: f64, p: &LinkParam, q: &QuadApprox) -> f64 {
    let (w1, w2) = approx_weights(p, q);
    b * (w1 + w2 * b)
}

fn approx_sum(
    y: &CountMatrix,
    model: &FactorModel,
    q: &QuadApprox,
    term: fn(f64, f64, &LinkParam) -> f64,
) -> Result<f64> {
    model.check_dims(y)?;
    let params = model.shifted_params()?;
    let l = &model.loadings;
    let f = &model.factors;

    let mut nonzero = 0.0;
    for (i, p) in params.iter().enumerate() {
        let li = l.row(i);
        let mut acc = 0.0;
        for (j, count) in y.row(i).iter() {
            let b = li.dot(&f.row(j));
            acc += term(count as f64, b, p) + approx_correction(b, p, q);
        }
        nonzero += acc;
    }

    let factor_sums = f.sum_axis(ndarray::Axis(0));
    let ftf = f.t().dot(f);
    let mut global = 0.0;
    for (i, p) in params.iter().enumerate() {
        let li = l.row(i);
        let (w1, w2) = approx_weights(p, q);
        global += w1 * li.dot(&factor_sums) + w2 * li.dot(&ftf.dot(&li));
    }
    Ok(nonzero - global)
}

/// Sparse approximate log-likelihood: exact terms on non-zero entries,
/// `exp(x) ≈ η₀ + η₁x + η₂x²` on zero entries with the `η₀` constant dropped.
pub fn approx_loglik(y: &CountMatrix, model: &FactorModel, q: &QuadApprox) -> Result<f64> {
    approx_sum(y, model, q, objective_term)
}

/// [`approx_loglik`] with the non-zero entries in rate form, i.e. shifted by
/// `Σ_{y_ij>0} (y_ij·log c_i + c_i)`. This is the objective the approximate
/// fitter reports.
pub fn approx_poisson_loglik(y: &CountMatrix, model: &FactorModel, q: &QuadApprox) -> Result<f64> {
    approx_sum(y, model, q, rate_term)
}

/// First entry (row-major) with `y_ij > 0` and `b_ij ≤ 0`.
pub fn boundary_violation(y: &CountMatrix, model: &FactorModel) -> Option<(usize, usize)> {
    y.iter().map(|(i, j, _)| (i, j)).find(|&(i, j)| !(model.linear_predictor(i, j) > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadapprox::chebyshev_nodes;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
        k: usize,
        zero_frac: f64,
    ) -> (CountMatrix, Array2<f64>, Array2<f64>) {
        let l = Array2::from_shape_fn((n, k), |_| rng.random_range(0.05..1.0));
        let f = Array2::from_shape_fn((m, k), |_| rng.random_range(0.05..1.0));
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() >= zero_frac {
                    t.push((i, j, rng.random_range(1..6)));
                }
            }
        }
        (CountMatrix::from_triplets(n, m, &t).unwrap(), l, f)
    }

    /// Term-by-term dense evaluation of the approximate objective.
    fn naive_approx(y: &CountMatrix, l: &Array2<f64>, f: &Array2<f64>, c: f64, s: &[f64], q: &QuadApprox) -> f64 {
        let mut total = 0.0;
        for i in 0..l.nrows() {
            let ci = c * s[i];
            let a = ci.max(1.0);
            for j in 0..f.nrows() {
                let b: f64 = (0..l.ncols()).map(|k| l[[i, k]] * f[[j, k]]).sum();
                let count = y.get(i, j) as f64;
                if count > 0.0 {
                    total += count * ((b / a).exp() - 1.0).ln() - ci * (b / a).exp();
                } else {
                    total -= ci * (q.eta1 * b / a + q.eta2 * b * b / (a * a));
                }
            }
        }
        total
    }

    #[test]
    fn exact_all_zero_data() {
        let y = CountMatrix::from_triplets(2, 2, &[]).unwrap();
        let model =
            FactorModel::new(Array2::zeros((2, 1)), array![[0.3], [2.0]], Link::shifted_log(1.0).unwrap()).unwrap();
        assert_eq!(exact_loglik(&y, &model).unwrap(), -4.0);
        assert_eq!(poisson_loglik(&y, &model).unwrap(), 0.0);
    }

    #[test]
    fn exact_single_entry() {
        let y = CountMatrix::from_triplets(1, 1, &[(0, 0, 1)]).unwrap();
        let b = 2f64.ln();
        let model = FactorModel::new(array![[1.0]], array![[b]], Link::shifted_log(1.0).unwrap()).unwrap();
        assert_relative_eq!(exact_loglik(&y, &model).unwrap(), -2.0, epsilon = 1e-14);
        // λ = 1: 1·log 1 − 1
        assert_relative_eq!(poisson_loglik(&y, &model).unwrap(), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_matches_high_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (y, l, f) = random_instance(&mut rng, 5, 4, 2, 0.4);
        let c = 0.5;
        let model = FactorModel::new(l.clone(), f.clone(), Link::shifted_log(c).unwrap()).unwrap();
        // Kahan-compensated term-by-term sum in the textbook form.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 0..5 {
            for j in 0..4 {
                let b = l[[i, 0]] * f[[j, 0]] + l[[i, 1]] * f[[j, 1]];
                let count = y.get(i, j) as f64;
                let term = count * (b.exp() - 1.0).ln() - c * b.exp();
                let yk = term - comp;
                let t = sum + yk;
                comp = (t - sum) - yk;
                sum = t;
            }
        }
        assert_relative_eq!(exact_loglik(&y, &model).unwrap(), sum, max_relative = 1e-10);
    }

    #[test]
    fn boundary_gives_negative_infinity() {
        let y = CountMatrix::from_triplets(2, 2, &[(1, 0, 3)]).unwrap();
        let model =
            FactorModel::new(array![[1.0], [0.0]], array![[1.0], [1.0]], Link::shifted_log(1.0).unwrap()).unwrap();
        assert_eq!(exact_loglik(&y, &model).unwrap(), f64::NEG_INFINITY);
        assert_eq!(boundary_violation(&y, &model), Some((1, 0)));
        let bad = CountMatrix::from_triplets(3, 2, &[]).unwrap();
        assert!(matches!(exact_loglik(&bad, &model), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn identity_examples() {
        let y = CountMatrix::from_triplets(2, 2, &[]).unwrap();
        let z = Array2::zeros((2, 1));
        assert_eq!(identity_loglik(&y, &z, &z, Array1::ones(2).view()).unwrap(), 0.0);
        let y = CountMatrix::from_triplets(1, 1, &[(0, 0, 2)]).unwrap();
        let v = identity_loglik(&y, &array![[1.0]], &array![[2.0]], Array1::ones(1).view()).unwrap();
        assert_relative_eq!(v, 2.0 * 2f64.ln() - 2.0, epsilon = 1e-14);
        assert_relative_eq!(v, -0.613_705_638_880_109, epsilon = 1e-12);
    }

    #[test]
    fn large_c_matches_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let (y, l, f) = random_instance(&mut rng, 20, 15, 3, 0.5);
            let model = FactorModel::new(l.clone(), f.clone(), Link::shifted_log(1e8).unwrap()).unwrap();
            let id = identity_loglik(&y, &l, &f, Array1::ones(20).view()).unwrap();
            let gap = (poisson_loglik(&y, &model).unwrap() - id).abs() / id.abs();
            assert!(gap < 1e-5, "{gap}");
        }
    }

    #[test]
    fn approx_equals_exact_on_dense_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (y, l, f) = random_instance(&mut rng, 6, 5, 2, 0.0);
        assert_eq!(y.nnz(), 30);
        for c in [0.01, 1.0, 50.0] {
            let model = FactorModel::new(l.clone(), f.clone(), Link::shifted_log(c).unwrap()).unwrap();
            let q = QuadApprox::for_link_constant(crate::ApproxMethod::Chebyshev, c).unwrap();
            assert_relative_eq!(
                approx_loglik(&y, &model, &q).unwrap(),
                exact_loglik(&y, &model).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn approx_zero_model_zero_data() {
        let y = CountMatrix::from_triplets(3, 2, &[]).unwrap();
        let model =
            FactorModel::new(Array2::zeros((3, 2)), Array2::zeros((2, 2)), Link::shifted_log(1.0).unwrap()).unwrap();
        assert_eq!(approx_loglik(&y, &model, &QuadApprox::taylor_about_zero()).unwrap(), 0.0);
    }

    #[test]
    fn sparse_identities_match_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let (y, l, f) = random_instance(&mut rng, 50, 40, 4, 0.9);
            let c = [0.01, 0.5, 1.0, 20.0][trial % 4];
            let s: Vec<f64> = (0..50).map(|_| rng.random_range(0.5..1.5)).collect();
            let model = FactorModel::with_size_factors(
                l.clone(),
                f.clone(),
                Link::shifted_log(c).unwrap(),
                Array1::from(s.clone()),
            )
            .unwrap();
            for q in [QuadApprox::taylor_about_zero(), QuadApprox::chebyshev_on(0.0, (1.0 / c).ln_1p()).unwrap()] {
                let fast = approx_loglik(&y, &model, &q).unwrap();
                let slow = naive_approx(&y, &l, &f, c, &s, &q);
                assert_relative_eq!(fast, slow, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn rate_form_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (y, l, f) = random_instance(&mut rng, 8, 7, 2, 0.5);
        let c = 0.3;
        let model = FactorModel::new(l, f, Link::shifted_log(c).unwrap()).unwrap();
        let offset_nz: f64 = y.iter().map(|(_, _, v)| v as f64 * c.ln() + c).sum();
        let offset_all = offset_nz + c * (56 - y.nnz()) as f64;
        assert_relative_eq!(
            poisson_loglik(&y, &model).unwrap(),
            exact_loglik(&y, &model).unwrap() + offset_all,
            max_relative = 1e-12
        );
        let q = QuadApprox::taylor_about_zero();
        assert_relative_eq!(
            approx_poisson_loglik(&y, &model, &q).unwrap(),
            approx_loglik(&y, &model, &q).unwrap() + offset_nz,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gap_is_eta0_constant_when_quadratic_is_exact() {
        // Every zero entry has b at a Chebyshev node, where the quadratic equals exp.
        let c = 1.0;
        let q = QuadApprox::chebyshev_on(0.0, 2f64.ln()).unwrap();
        let node = chebyshev_nodes(0.0, 2f64.ln())[1];
        let (n, m) = (4, 5);
        let l = Array2::from_elem((n, 1), 1.0);
        let f = Array2::from_elem((m, 1), node);
        let y = CountMatrix::from_triplets(n, m, &[(0, 0, 2), (2, 3, 1)]).unwrap();
        let model = FactorModel::new(l, f, Link::shifted_log(c).unwrap()).unwrap();
        let zeros = (n * m - y.nnz()) as f64;
        let gap = exact_loglik(&y, &model).unwrap() - approx_loglik(&y, &model, &q).unwrap();
        assert_relative_eq!(gap, -c * q.eta0 * zeros, max_relative = 1e-12);
    }

    #[test]
    fn chebyshev_tracks_exact_better_than_taylor() {
        // Zero-entry predictors spread over [0, log(1 + 1/c)].
        let c = 0.01;
        let hi = (1.0f64 / c).ln_1p();
        let (n, m) = (30, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Array2::from_shape_fn((n, 1), |_| rng.random_range(0.0..1.0));
        let f = Array2::from_elem((m, 1), hi);
        let y = CountMatrix::from_triplets(n, m, &[]).unwrap();
        let model = FactorModel::new(l, f, Link::shifted_log(c).unwrap()).unwrap();
        let exact = exact_loglik(&y, &model).unwrap();
        let zeros = (n * m) as f64;
        let err = |q: QuadApprox| (exact - (approx_loglik(&y, &model, &q).unwrap() - c * q.eta0 * zeros)).abs();
        let cheb = err(QuadApprox::chebyshev_on(0.0, hi).unwrap());
        let taylor = err(QuadApprox::taylor_about_zero());
        assert!(cheb <= taylor, "{cheb} vs {taylor}");
    }
}
