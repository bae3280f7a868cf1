//! Reference fitters: classical identity-link Poisson NMF and Frobenius NMF
//! on `log(1 + y/c)`-transformed counts, both by multiplicative updates.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::countmat::CountMatrix;
use crate::error::{Error, Result};
use crate::likelihood::{identity_loglik, FactorModel};
use crate::link::{Link, LinkParam};

#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub loadings: Array2<f64>,
    pub factors: Array2<f64>,
    /// Objective after initialization and after every iteration: the
    /// log-likelihood (identity) or the squared error (Frobenius).
    pub trace: Vec<f64>,
}

impl BaselineFit {
    /// The shifted-log model implied by a Frobenius fit: `LFᵀ` estimates
    /// `log(1 + λ/c)`, so the linear predictor is `α·LFᵀ`.
    pub fn to_log1p_model(&self, c: f64) -> Result<FactorModel> {
        let p = LinkParam::new(c)?;
        FactorModel::new(&self.loadings * p.alpha(), self.factors.clone(), Link::ShiftedLog(p))
    }

    pub fn to_identity_model(&self) -> Result<FactorModel> {
        FactorModel::new(self.loadings.clone(), self.factors.clone(), Link::Identity)
    }
}

fn check(y: &CountMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if y.n_rows() == 0 || y.n_cols() == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    Ok(())
}

fn init(n: usize, m: usize, k: usize, mean: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (mean / k as f64).sqrt().max(1e-3);
    let l = Array2::from_shape_simple_fn((n, k), || s * rng.random_range(0.5..1.5));
    let f = Array2::from_shape_simple_fn((m, k), || s * rng.random_range(0.5..1.5));
    (l, f)
}

/// `x ← x · num / den`, with `0/0` taken as 0.
fn multiplicative_step(x: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>) {
    ndarray::Zip::from(x).and(num).and(den).for_each(|x, &a, &b| {
        *x = if a == 0.0 { 0.0 } else { *x * a / b };
    });
}

/// `Σ_j w(y_ij, b_ij)·f_j` for every row `i`, over the non-zero entries only.
fn sparse_product(
    y: &CountMatrix,
    rows_of: &Array2<f64>,
    other: &Array2<f64>,
    by_column: bool,
    weight: impl Fn(f64, f64) -> f64,
) -> Array2<f64> {
    let n = if by_column { y.n_cols() } else { y.n_rows() };
    let mut out = Array2::zeros((n, other.ncols()));
    for i in 0..n {
        let slice = if by_column { y.col(i) } else { y.row(i) };
        let r = rows_of.row(i);
        let mut acc = out.row_mut(i);
        for (j, count) in slice.iter() {
            let o = other.row(j);
            let w = weight(count as f64, r.dot(&o));
            acc.scaled_add(w, &o);
        }
    }
    out
}

/// Lee–Seung multiplicative updates for identity-link Poisson NMF.
pub fn fit_identity_mu(y: &CountMatrix, k: usize, max_iters: usize, seed: u64) -> Result<BaselineFit> {
    check(y, k)?;
    let (n, m) = (y.n_rows(), y.n_cols());
    let (mut l, mut f) = init(n, m, k, y.total() as f64 / (n * m) as f64, seed);
    let ones = Array1::ones(n);
    let ll = |l: &Array2<f64>, f: &Array2<f64>| identity_loglik(y, l, f, ones.view());
    let mut trace = vec![ll(&l, &f)?];
    let ratio = |count: f64, b: f64| count / b;
    for _ in 0..max_iters {
        let num = sparse_product(y, &l, &f, false, ratio);
        let den = Array2::from_shape_fn((n, k), |(_, c)| f.column(c).sum());
        multiplicative_step(&mut l, &num, &den);
        let num = sparse_product(y, &f, &l, true, ratio);
        let den = Array2::from_shape_fn((m, k), |(_, c)| l.column(c).sum());
        multiplicative_step(&mut f, &num, &den);
        trace.push(ll(&l, &f)?);
    }
    Ok(BaselineFit { loadings: l, factors: f, trace })
}

/// Multiplicative updates minimising `‖Ỹ − LFᵀ‖²` with `ỹ_ij = log(1 + y_ij/c)`.
pub fn fit_frobenius_log1p(y: &CountMatrix, k: usize, c: f64, max_iters: usize, seed: u64) -> Result<BaselineFit> {
    check(y, k)?;
    LinkParam::new(c)?;
    let (n, m) = (y.n_rows(), y.n_cols());
    let transform = |count: f64| (count / c).ln_1p();
    let total: f64 = y.iter().map(|(_, _, v)| transform(v as f64)).sum();
    let sq_norm: f64 = y.iter().map(|(_, _, v)| transform(v as f64).powi(2)).sum();
    let (mut l, mut f) = init(n, m, k, total / (n * m) as f64, seed);

    let objective = |l: &Array2<f64>, f: &Array2<f64>| {
        let cross: f64 = y.iter().map(|(i, j, v)| transform(v as f64) * l.row(i).dot(&f.row(j))).sum();
        let gram = (l.t().dot(l) * f.t().dot(f)).sum();
        (sq_norm - 2.0 * cross + gram).max(0.0)
    };
    let value = |count: f64, _b: f64| transform(count);
    let mut trace = vec![objective(&l, &f)];
    for _ in 0..max_iters {
        let num = sparse_product(y, &l, &f, false, value);
        let den = l.dot(&f.t().dot(&f));
        multiplicative_step(&mut l, &num, &den);
        let num = sparse_product(y, &f, &l, true, value);
        let den = f.dot(&l.t().dot(&l));
        multiplicative_step(&mut f, &num, &den);
        trace.push(objective(&l, &f));
    }
    Ok(BaselineFit { loadings: l, factors: f, trace })
}
