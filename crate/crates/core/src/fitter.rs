//! Alternating block coordinate ascent over `L` and `F`.
//!
//! Each outer iteration solves one non-negative regression per row of `Y`
//! (design `F`) and then one per column (design `L`). Rows are independent
//! given `F` and columns given `L`, so both half-iterations run on a rayon
//! pool. Results are reduced in index order, which makes fits bitwise
//! reproducible for any worker count.
//!
//! Fits start from a rank-1 solution padded with tiny random columns, and the
//! returned model is rescaled so every column of `L` peaks at 1.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::countmat::CountMatrix;
use crate::error::{Error, Result};
use crate::likelihood::{approx_poisson_loglik, poisson_loglik, FactorModel};
use crate::link::{Link, LinkParam};
use crate::quadapprox::{ApproxMethod, QuadApprox};
use crate::regression::{column_sums, cross_product, Gram, RegressionProblem, Shift, Solution, SolverOptions, Variant};

/// Value substituted for `c = ∞`; the shifted-log likelihood is then within
/// `O(1/c)` of the identity-link likelihood.
pub const INFINITE_C: f64 = 1e8;

/// The link constant: a positive number or `∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CParam {
    Finite(f64),
    Infinity,
}

impl CParam {
    pub fn effective(&self) -> f64 {
        match self {
            CParam::Finite(c) => *c,
            CParam::Infinity => INFINITE_C,
        }
    }
}

impl fmt::Display for CParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CParam::Finite(c) => write!(f, "{c}"),
            CParam::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for CParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(CParam::Infinity),
            other => {
                let c: f64 =
                    other.parse().map_err(|_| Error::InvalidParameter(format!("cannot parse c from {s:?}")))?;
                if c.is_infinite() && c > 0.0 {
                    return Ok(CParam::Infinity);
                }
                LinkParam::new(c)?;
                Ok(CParam::Finite(c))
            }
        }
    }
}

impl Serialize for CParam {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CParam::Finite(c) => s.serialize_f64(*c),
            CParam::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for CParam {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(c) => LinkParam::new(c).map(|_| CParam::Finite(c)).map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Exact,
    Approx(ApproxMethod),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub c: CParam,
    pub objective: Objective,
    pub max_outer_iters: usize,
    /// Stop once the relative change of the objective falls below this.
    pub rel_tol: f64,
    pub inner_cycles: usize,
    pub max_halvings: usize,
    pub seed: u64,
    pub use_size_factors: bool,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    pub rank1_max_iters: usize,
    pub rank1_rel_tol: f64,
    /// Range of the uniform noise that fills the extra columns after the rank-1 start.
    pub expand_noise: (f64, f64),
}

impl FitConfig {
    pub fn new(k: usize, c: CParam) -> Self {
        Self {
            k,
            c,
            objective: Objective::Exact,
            max_outer_iters: 100,
            rel_tol: 1e-6,
            inner_cycles: 3,
            max_halvings: 30,
            seed: 0,
            use_size_factors: false,
            threads: 0,
            rank1_max_iters: 100,
            rank1_rel_tol: 1e-6,
            expand_noise: (1e-8, 1e-6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rank1_rel_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        let (lo, hi) = self.expand_noise;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid expansion noise range ({lo}, {hi})")));
        }
        LinkParam::new(self.c.effective())?;
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { cycles: self.inner_cycles, max_halvings: self.max_halvings, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Optimised objective (rate form) at the start and after every outer iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub rank1_iterations: usize,
    pub wall_time_secs: f64,
    pub effective_c: f64,
    /// Columns of `L` that are entirely zero.
    pub empty_factors: Vec<usize>,
    pub config: FitConfig,
}

/// Outcome of [`AlternatingFitter::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// `s_i = (row sum i) / (mean row sum)`; rows with zero sum are rejected.
pub fn compute_size_factors(y: &CountMatrix) -> Result<Array1<f64>> {
    let sums = y.row_sums();
    if let Some(i) = sums.iter().position(|&s| s == 0) {
        return Err(Error::ZeroSumRow(i));
    }
    let mean = sums.iter().map(|&s| s as f64).sum::<f64>() / sums.len() as f64;
    Ok(sums.iter().map(|&s| s as f64 / mean).collect())
}

/// The objective and data shared by every regression of a fit.
pub struct AlternatingFitter<'y> {
    y: &'y CountMatrix,
    params: Vec<LinkParam>,
    size_factors: Array1<f64>,
    link: LinkParam,
    quad: Option<QuadApprox>,
    solver: SolverOptions,
}

impl<'y> AlternatingFitter<'y> {
    pub fn new(
        y: &'y CountMatrix,
        c: f64,
        size_factors: Array1<f64>,
        objective: Objective,
        solver: SolverOptions,
    ) -> Result<Self> {
        if size_factors.len() != y.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} size factors for {} rows",
                size_factors.len(),
                y.n_rows()
            )));
        }
        let link = LinkParam::new(c)?;
        let params = size_factors.iter().map(|&s| link.scaled(s)).collect::<Result<Vec<_>>>()?;
        let quad = match objective {
            Objective::Exact => None,
            // One interval for the whole fit, from the unscaled constant.
            Objective::Approx(method) => Some(QuadApprox::for_link_constant(method, c)?),
        };
        Ok(Self { y, params, size_factors, link, quad, solver })
    }

    pub fn quad(&self) -> Option<&QuadApprox> {
        self.quad.as_ref()
    }

    fn variant(&self) -> Variant<'_> {
        match &self.quad {
            Some(q) => Variant::Approx(q),
            None => Variant::Exact,
        }
    }

    pub fn model(&self, loadings: Array2<f64>, factors: Array2<f64>) -> Result<FactorModel> {
        FactorModel::with_size_factors(loadings, factors, Link::ShiftedLog(self.link), self.size_factors.clone())
    }

    /// Global value of the optimised objective.
    pub fn objective(&self, loadings: &Array2<f64>, factors: &Array2<f64>) -> Result<f64> {
        let model = self.model(loadings.clone(), factors.clone())?;
        match &self.quad {
            Some(q) => approx_poisson_loglik(self.y, &model, q),
            None => poisson_loglik(self.y, &model),
        }
    }

    fn check_shapes(&self, loadings: &Array2<f64>, factors: &Array2<f64>) -> Result<()> {
        if loadings.nrows() != self.y.n_rows()
            || factors.nrows() != self.y.n_cols()
            || loadings.ncols() != factors.ncols()
        {
            return Err(Error::DimensionMismatch(format!(
                "L is {:?} and F is {:?} for a {}x{} matrix",
                loadings.dim(),
                factors.dim(),
                self.y.n_rows(),
                self.y.n_cols()
            )));
        }
        Ok(())
    }

    /// Replaces every row of `L` by its regression update; returns the new objective.
    pub fn update_loadings(&self, loadings: &mut Array2<f64>, factors: &Array2<f64>) -> Result<f64> {
        self.check_shapes(loadings, factors)?;
        let moments = self.quad.map(|_| (column_sums(factors.view()), cross_product(factors.view())));
        let current = &*loadings;
        let solutions: Vec<Result<Solution>> = (0..self.y.n_rows())
            .into_par_iter()
            .map(|i| {
                let p = self.params[i];
                let mut problem = RegressionProblem::new(factors.view(), self.y.row(i), Shift::Uniform(p))?;
                if let (Some(q), Some((sums, cross))) = (&self.quad, &moments) {
                    problem = problem.with_gram(Cow::Owned(Gram::uniform(sums, cross, &p, q)));
                }
                solve_block(&problem, current.row(i), self.variant(), &self.solver, "row", i)
            })
            .collect();
        write_back(loadings, solutions)
    }

    /// Replaces every row of `F` by its regression update; returns the new objective.
    pub fn update_factors(&self, loadings: &Array2<f64>, factors: &mut Array2<f64>) -> Result<f64> {
        self.check_shapes(loadings, factors)?;
        let shift = Shift::PerObservation(&self.params);
        let gram = match &self.quad {
            Some(q) => Some(Gram::compute(loadings.view(), &shift, q)?),
            None => None,
        };
        let current = &*factors;
        let solutions: Vec<Result<Solution>> = (0..self.y.n_cols())
            .into_par_iter()
            .map(|j| {
                let mut problem = RegressionProblem::new(loadings.view(), self.y.col(j), shift)?;
                if let Some(g) = &gram {
                    problem = problem.with_gram(Cow::Borrowed(g));
                }
                solve_block(&problem, current.row(j), self.variant(), &self.solver, "column", j)
            })
            .collect();
        write_back(factors, solutions)
    }

    /// Alternates row and column updates until the relative objective change
    /// drops below `rel_tol` or `max_iters` outer iterations have run.
    pub fn run(
        &self,
        loadings: &mut Array2<f64>,
        factors: &mut Array2<f64>,
        max_iters: usize,
        rel_tol: f64,
    ) -> Result<RunSummary> {
        let mut trace = vec![self.objective(loadings, factors)?];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < max_iters {
            self.update_loadings(loadings, factors)?;
            let value = self.update_factors(loadings, factors)?;
            iterations += 1;
            let prev = *trace.last().expect("non-empty trace");
            trace.push(value);
            log::debug!("iteration {iterations}: objective {value:.10e}");
            if (value - prev).abs() <= rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        Ok(RunSummary { trace, converged, iterations })
    }
}

fn solve_block(
    problem: &RegressionProblem,
    start: ndarray::ArrayView1<f64>,
    variant: Variant,
    solver: &SolverOptions,
    block: &'static str,
    index: usize,
) -> Result<Solution> {
    let solution = problem.solve(start, variant, solver).map_err(|e| match e {
        Error::NonFiniteStart => Error::NonFiniteUpdate { block, index },
        other => other,
    })?;
    if !solution.objective().is_finite() || solution.beta.iter().any(|v| !v.is_finite()) {
        log::error!("{block} {index}: non-finite update {:?}", solution.beta);
        return Err(Error::NonFiniteUpdate { block, index });
    }
    Ok(solution)
}

fn write_back(target: &mut Array2<f64>, solutions: Vec<Result<Solution>>) -> Result<f64> {
    let mut total = 0.0;
    for (mut row, solution) in target.rows_mut().into_iter().zip(solutions) {
        let solution = solution?;
        total += solution.objective();
        row.assign(&solution.beta);
    }
    Ok(total)
}

fn size_factors_for(y: &CountMatrix, config: &FitConfig) -> Result<Array1<f64>> {
    if config.use_size_factors {
        compute_size_factors(y)
    } else {
        Ok(Array1::ones(y.n_rows()))
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

fn rank1_start(y: &CountMatrix, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = uniform_matrix(&mut rng, y.n_rows(), 1, 0.1, 1.0);
    let f = uniform_matrix(&mut rng, y.n_cols(), 1, 0.1, 1.0);
    (l, f)
}

fn run_rank1(
    fitter: &AlternatingFitter,
    y: &CountMatrix,
    config: &FitConfig,
) -> Result<(Array2<f64>, Array2<f64>, RunSummary)> {
    let (mut l, mut f) = rank1_start(y, config.seed);
    let summary = fitter.run(&mut l, &mut f, config.rank1_max_iters, config.rank1_rel_tol)?;
    Ok((l, f, summary))
}

/// Rank-1 fit from a seeded uniform(0.1, 1) start, with the objective, link
/// constant and size-factor setting of `config`.
pub fn init_rank1(y: &CountMatrix, config: &FitConfig) -> Result<(Array1<f64>, Array1<f64>)> {
    config.validate()?;
    let fitter = AlternatingFitter::new(
        y,
        config.c.effective(),
        size_factors_for(y, config)?,
        config.objective,
        config.solver(),
    )?;
    let (l, f, _) = with_pool(config.threads, || run_rank1(&fitter, y, config))?;
    Ok((l.column(0).to_owned(), f.column(0).to_owned()))
}

/// Appends `K − 1` columns of seeded uniform noise in `noise` to the rank-1 solution.
pub fn init_expand(
    l: &Array1<f64>,
    f: &Array1<f64>,
    k: usize,
    seed: u64,
    noise: (f64, f64),
) -> Result<(Array2<f64>, Array2<f64>)> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let extra_l = uniform_matrix(&mut rng, l.len(), k - 1, noise.0, noise.1);
    let extra_f = uniform_matrix(&mut rng, f.len(), k - 1, noise.0, noise.1);
    let stack = |v: &Array1<f64>, extra: &Array2<f64>| {
        ndarray::concatenate(Axis(1), &[v.view().insert_axis(Axis(1)), extra.view()]).expect("matching rows")
    };
    Ok((stack(l, &extra_l), stack(f, &extra_f)))
}

/// Divides column `k` of `L` by its maximum and multiplies column `k` of `F`
/// by the same amount. Returns the rescaled model and the all-zero columns,
/// which are left untouched.
pub fn rescale(model: &FactorModel) -> (FactorModel, Vec<usize>) {
    let mut out = model.clone();
    let mut empty = Vec::new();
    for k in 0..model.rank() {
        let a = out.loadings.column(k).fold(0.0f64, |m, &v| m.max(v));
        if a > 0.0 {
            out.loadings.column_mut(k).mapv_inplace(|v| v / a);
            out.factors.column_mut(k).mapv_inplace(|v| v * a);
        } else {
            empty.push(k);
        }
    }
    (out, empty)
}

fn with_pool<T: Send>(threads: usize, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(job)
}

/// Fits a rank-`K` log1p NMF to `y`.
pub fn fit(y: &CountMatrix, config: &FitConfig) -> Result<(FactorModel, FitReport)> {
    config.validate()?;
    let started = Instant::now();
    let c = config.c.effective();
    let fitter = AlternatingFitter::new(y, c, size_factors_for(y, config)?, config.objective, config.solver())?;

    let (loadings, factors, summary, rank1_iterations) = with_pool(config.threads, || {
        let (l, f, rank1) = run_rank1(&fitter, y, config)?;
        if config.k == 1 {
            let iterations = rank1.iterations;
            return Ok((l, f, rank1, iterations));
        }
        let (mut l, mut f) =
            init_expand(&l.column(0).to_owned(), &f.column(0).to_owned(), config.k, config.seed, config.expand_noise)?;
        let summary = fitter.run(&mut l, &mut f, config.max_outer_iters, config.rel_tol)?;
        Ok((l, f, summary, rank1.iterations))
    })?;

    let (model, empty_factors) = rescale(&fitter.model(loadings, factors)?);
    if !empty_factors.is_empty() {
        log::warn!("factors {empty_factors:?} have all-zero loadings");
    }
    let report = FitReport {
        loglik_trace: summary.trace,
        converged: summary.converged,
        iterations: summary.iterations,
        rank1_iterations,
        wall_time_secs: started.elapsed().as_secs_f64(),
        effective_c: c,
        empty_factors,
        config: config.clone(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{exact_loglik, identity_loglik};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand_distr::{Distribution, Poisson};

    fn simulate(n: usize, m: usize, k: usize, c: f64, scale: f64, seed: u64) -> (CountMatrix, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = uniform_matrix(&mut rng, n, k, 0.0, 1.0);
        let f = uniform_matrix(&mut rng, m, k, 0.0, scale);
        let p = LinkParam::new(c).unwrap();
        let rates = l.dot(&f.t()).mapv(|b| p.rate(b));
        let mut t = Vec::new();
        for ((i, j), &lam) in rates.indexed_iter() {
            if lam > 0.0 {
                let v = Poisson::new(lam).unwrap().sample(&mut rng) as i64;
                t.push((i, j, v));
            }
        }
        (CountMatrix::from_triplets(n, m, &t).unwrap(), rates)
    }

    #[test]
    fn size_factor_examples() {
        let y = CountMatrix::from_triplets(2, 3, &[(0, 0, 10), (1, 1, 20), (1, 2, 10)]).unwrap();
        assert_eq!(compute_size_factors(&y).unwrap(), array![0.5, 1.5]);
        let y = CountMatrix::from_triplets(2, 2, &[(0, 0, 4), (1, 1, 4)]).unwrap();
        assert_eq!(compute_size_factors(&y).unwrap(), array![1.0, 1.0]);
        let y = CountMatrix::from_triplets(2, 2, &[(0, 0, 4)]).unwrap();
        assert!(matches!(compute_size_factors(&y), Err(Error::ZeroSumRow(1))));
        let (y, _) = simulate(40, 30, 2, 1.0, 2.0, 3);
        let s = compute_size_factors(&y).unwrap();
        assert!((s.mean().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c_param_parsing() {
        assert_eq!("inf".parse::<CParam>().unwrap(), CParam::Infinity);
        assert_eq!("Infinity".parse::<CParam>().unwrap(), CParam::Infinity);
        assert_eq!("0.5".parse::<CParam>().unwrap(), CParam::Finite(0.5));
        assert!("-1".parse::<CParam>().is_err());
        assert!("abc".parse::<CParam>().is_err());
        assert_eq!(CParam::Infinity.effective(), INFINITE_C);
        let json = serde_json::to_string(&[CParam::Finite(2.0), CParam::Infinity]).unwrap();
        assert_eq!(json, r#"[2.0,"inf"]"#);
        let back: Vec<CParam> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![CParam::Finite(2.0), CParam::Infinity]);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::new(0, CParam::Finite(1.0)).validate().is_err());
        let mut cfg = FitConfig::new(2, CParam::Finite(1.0));
        cfg.rel_tol = 0.0;
        assert!(cfg.validate().is_err());
        assert!(FitConfig::new(2, CParam::Finite(1.0)).validate().is_ok());
    }

    #[test]
    fn rank1_recovers_large_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = 1.0;
        let p = LinkParam::new(c).unwrap();
        let (n, m) = (40, 30);
        let l = Array1::from_shape_fn(n, |_| rng.random_range(2.0..3.0));
        let f = Array1::from_shape_fn(m, |_| rng.random_range(2.0..3.0));
        let truth = Array2::from_shape_fn((n, m), |(i, j)| p.rate(l[i] * f[j]));
        assert!(truth.iter().all(|&v| v >= 50.0));
        let mut t = Vec::new();
        for ((i, j), &lam) in truth.indexed_iter() {
            t.push((i, j, Poisson::new(lam).unwrap().sample(&mut rng) as i64));
        }
        let y = CountMatrix::from_triplets(n, m, &t).unwrap();
        let cfg = FitConfig::new(1, CParam::Finite(c));
        let (lh, fh) = init_rank1(&y, &cfg).unwrap();
        let mut close = 0;
        for i in 0..n {
            for j in 0..m {
                if (p.rate(lh[i] * fh[j]) - truth[[i, j]]).abs() <= 0.05 * truth[[i, j]] {
                    close += 1;
                }
            }
        }
        assert!(close as f64 >= 0.95 * (n * m) as f64, "{close}");
        assert_eq!(init_rank1(&y, &cfg).unwrap(), (lh, fh));
    }

    #[test]
    fn rank1_of_zero_matrix_is_zero() {
        let y = CountMatrix::from_triplets(5, 4, &[]).unwrap();
        let (l, f) = init_rank1(&y, &FitConfig::new(1, CParam::Finite(1.0))).unwrap();
        let product = l.insert_axis(Axis(1)).dot(&f.insert_axis(Axis(0)));
        assert!(product.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expand_examples() {
        let l = array![1.0, 2.0];
        let f = array![0.5, 0.25, 3.0];
        let (l1, f1) = init_expand(&l, &f, 1, 9, (1e-8, 1e-6)).unwrap();
        assert_eq!(l1.column(0), l);
        assert_eq!((l1.ncols(), f1.ncols()), (1, 1));
        let (l3, f3) = init_expand(&l, &f, 3, 9, (1e-8, 1e-6)).unwrap();
        assert_eq!(l3.column(0), l);
        assert_eq!(f3.column(0), f);
        for v in l3.slice(ndarray::s![.., 1..]).iter().chain(f3.slice(ndarray::s![.., 1..]).iter()) {
            assert!(*v > 1e-8 && *v < 1e-6);
        }
    }

    #[test]
    fn expansion_barely_moves_loglik() {
        let (y, _) = simulate(20, 20, 2, 1.0, 2.0, 5);
        let cfg = FitConfig::new(3, CParam::Finite(1.0));
        let (l, f) = init_rank1(&y, &cfg).unwrap();
        let (l0, f0) = init_expand(&l, &f, 3, 5, cfg.expand_noise).unwrap();
        let link = Link::shifted_log(1.0).unwrap();
        let before =
            exact_loglik(&y, &FactorModel::new(l.insert_axis(Axis(1)), f.insert_axis(Axis(1)), link).unwrap()).unwrap();
        let after = exact_loglik(&y, &FactorModel::new(l0, f0, link).unwrap()).unwrap();
        assert!((before - after).abs() < 1e-3, "{before} vs {after}");
    }

    #[test]
    fn rescale_examples() {
        let link = Link::shifted_log(1.0).unwrap();
        let m = FactorModel::new(array![[0.5], [0.25]], array![[2.0]], link).unwrap();
        let (r, empty) = rescale(&m);
        assert_eq!(r.loadings, array![[1.0], [0.5]]);
        assert_eq!(r.factors, array![[1.0]]);
        assert!(empty.is_empty());
        assert_eq!(rescale(&r).0, r);

        let m = FactorModel::new(array![[0.0, 3.0], [0.0, 1.0]], array![[2.0, 1.0]], link).unwrap();
        let (r, empty) = rescale(&m);
        assert_eq!(empty, vec![0]);
        assert_eq!(r.loadings.column(0), m.loadings.column(0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = uniform_matrix(&mut rng, 30, 4, 0.0, 5.0);
        let f = uniform_matrix(&mut rng, 20, 4, 0.0, 5.0);
        let m = FactorModel::new(l, f, link).unwrap();
        let (r, _) = rescale(&m);
        let diff = (&r.loadings.dot(&r.factors.t()) - &m.loadings.dot(&m.factors.t())).mapv(f64::abs);
        let scale = m.loadings.dot(&m.factors.t()).fold(0.0f64, |a, &v| a.max(v));
        assert!(diff.fold(0.0f64, |a, &v| a.max(v)) < 1e-12 * scale.max(1.0));
        for k in 0..4 {
            assert_eq!(r.loadings.column(k).fold(0.0f64, |a, &v| a.max(v)), 1.0);
        }
    }

    #[test]
    fn trace_is_monotone() {
        let (y, _) = simulate(100, 80, 5, 1.0, 1.0, 42);
        let mut cfg = FitConfig::new(5, CParam::Finite(1.0));
        cfg.seed = 42;
        cfg.max_outer_iters = 30;
        for objective in [Objective::Exact, Objective::Approx(ApproxMethod::Chebyshev)] {
            cfg.objective = objective;
            let (_, report) = fit(&y, &cfg).unwrap();
            for w in report.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()), "{objective:?}: {w:?}");
            }
        }
    }

    #[test]
    fn half_iterations_ascend_and_decompose() {
        let (y, _) = simulate(40, 30, 3, 0.5, 1.5, 8);
        for objective in
            [Objective::Exact, Objective::Approx(ApproxMethod::Chebyshev), Objective::Approx(ApproxMethod::Taylor)]
        {
            let s = compute_size_factors(&y).unwrap();
            let fitter = AlternatingFitter::new(&y, 0.5, s, objective, SolverOptions::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut l = uniform_matrix(&mut rng, 40, 3, 0.1, 1.0);
            let mut f = uniform_matrix(&mut rng, 30, 3, 0.1, 1.0);
            let mut last = fitter.objective(&l, &f).unwrap();
            for _ in 0..5 {
                let after_l = fitter.update_loadings(&mut l, &f).unwrap();
                assert_relative_eq!(after_l, fitter.objective(&l, &f).unwrap(), max_relative = 1e-9);
                assert!(after_l >= last - 1e-9 * last.abs(), "{objective:?}");
                let after_f = fitter.update_factors(&l, &mut f).unwrap();
                assert_relative_eq!(after_f, fitter.objective(&l, &f).unwrap(), max_relative = 1e-9);
                assert!(after_f >= after_l - 1e-9 * after_l.abs(), "{objective:?}");
                last = after_f;
            }
        }
    }

    #[test]
    fn k1_fit_equals_rank1_init() {
        let (y, _) = simulate(30, 25, 1, 1.0, 2.0, 6);
        let mut cfg = FitConfig::new(1, CParam::Finite(1.0));
        cfg.seed = 6;
        let (l, f) = init_rank1(&y, &cfg).unwrap();
        let (model, _) = fit(&y, &cfg).unwrap();
        let (expected, _) = rescale(
            &FactorModel::new(l.insert_axis(Axis(1)), f.insert_axis(Axis(1)), Link::shifted_log(1.0).unwrap()).unwrap(),
        );
        assert_eq!(model.loadings, expected.loadings);
        assert_eq!(model.factors, expected.factors);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let (y, _) = simulate(60, 50, 3, 1.0, 1.0, 10);
        let mut cfg = FitConfig::new(3, CParam::Finite(1.0));
        cfg.max_outer_iters = 10;
        cfg.threads = 1;
        let (a, _) = fit(&y, &cfg).unwrap();
        cfg.threads = 4;
        let (b, _) = fit(&y, &cfg).unwrap();
        let la = exact_loglik(&y, &a).unwrap();
        let lb = exact_loglik(&y, &b).unwrap();
        assert!((la - lb).abs() <= 1e-6 * la.abs());
    }

    #[test]
    fn large_c_fit_matches_identity_loglik() {
        let (y, _) = simulate(50, 40, 2, INFINITE_C, 5.0, 12);
        let mut cfg = FitConfig::new(2, CParam::Infinity);
        cfg.max_outer_iters = 20;
        let (model, report) = fit(&y, &cfg).unwrap();
        assert_eq!(report.effective_c, INFINITE_C);
        let p = LinkParam::new(INFINITE_C).unwrap();
        let rates = model.loadings.dot(&model.factors.t()).mapv(|b| p.rate(b));
        // identity-link factors reproducing the same rates
        let lid = model.loadings.clone();
        let fid = &model.factors * (p.c() / p.alpha());
        let id = identity_loglik(&y, &lid, &fid, model.size_factors.view()).unwrap();
        let shifted = poisson_loglik(&y, &model).unwrap();
        assert!((id - shifted).abs() <= 1e-3 * shifted.abs(), "{id} vs {shifted}");
        assert!(rates.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_rows_are_allowed() {
        let y = CountMatrix::from_triplets(4, 3, &[(0, 0, 2), (0, 1, 1), (2, 2, 5)]).unwrap();
        let (model, _) = fit(&y, &FitConfig::new(2, CParam::Finite(1.0))).unwrap();
        assert!(model.loadings.row(1).iter().all(|&v| v == 0.0));
        let mut cfg = FitConfig::new(2, CParam::Finite(1.0));
        cfg.use_size_factors = true;
        assert!(matches!(fit(&y, &cfg), Err(Error::ZeroSumRow(1))));
    }
}
