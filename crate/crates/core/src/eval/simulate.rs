use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;

use crate::countmat::CountMatrix;
use crate::error::{Error, Result};
use crate::fitter::CParam;
use crate::link::LinkParam;

/// Bracket for the entry scale `σ`, searched on a log scale.
const SCALE_BRACKET: (f64, f64) = (1e-4, 1e4);
const BISECTION_STEPS: usize = 200;
/// Rates above this are rounded instead of sampled.
const LARGE_RATE: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct Simulation {
    pub y: CountMatrix,
    pub loadings: Array2<f64>,
    pub factors: Array2<f64>,
    /// Calibrated scale of the exponential entries.
    pub scale: f64,
    /// `mean exp(−λ_ij)` at the calibrated scale.
    pub expected_sparsity: f64,
}

fn rate_fn(c: CParam) -> Result<Box<dyn Fn(f64) -> f64 + Sync>> {
    Ok(match c {
        CParam::Finite(c) => {
            let p = LinkParam::new(c)?;
            Box::new(move |b| p.rate(b))
        }
        CParam::Infinity => Box::new(|b| b),
    })
}

fn expected_zero_fraction(base: &Array2<f64>, scale: f64, rate: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    let s2 = scale * scale;
    let rows: Vec<f64> = (0..base.nrows())
        .into_par_iter()
        .map(|i| base.row(i).iter().map(|&b| (-rate(s2 * b)).exp()).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() / base.len() as f64
}

/// Draws `L`, `F` with i.i.d. exponential entries of a common scale `σ`,
/// calibrated so that the expected fraction of zero counts equals
/// `target_sparsity`, then samples `Y ~ Poisson(λ)` under the shifted-log
/// link (identity link for `c = ∞`).
///
/// The exponential draws are fixed before calibration, so `σ` only rescales
/// them; rows of `Y` use independent streams of the seeded generator.
pub fn simulate(n: usize, m: usize, k: usize, c: CParam, target_sparsity: f64, seed: u64) -> Result<Simulation> {
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::InvalidParameter("simulation dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&target_sparsity) {
        return Err(Error::InvalidParameter(format!("target sparsity must lie in [0, 1), got {target_sparsity}")));
    }
    let rate = rate_fn(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l0 = Array2::from_shape_simple_fn((n, k), || Exp1.sample(&mut rng));
    let f0 = Array2::from_shape_simple_fn((m, k), || Exp1.sample(&mut rng));
    let base = l0.dot(&f0.t());

    // The zero fraction decreases in σ.
    let (mut lo, mut hi) = (SCALE_BRACKET.0.ln(), SCALE_BRACKET.1.ln());
    let at = |log_scale: f64| expected_zero_fraction(&base, log_scale.exp(), rate.as_ref());
    if at(lo) < target_sparsity || at(hi) > target_sparsity {
        return Err(Error::Unattainable(target_sparsity));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if at(mid) > target_sparsity {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let scale = (0.5 * (lo + hi)).exp();
    let expected_sparsity = at(scale.ln());

    let s2 = scale * scale;
    let triplets: Vec<Vec<(usize, usize, i64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = base.row(i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            row.iter()
                .enumerate()
                .filter_map(|(j, &b)| {
                    let lambda = rate(s2 * b);
                    let count = if lambda > LARGE_RATE {
                        // Relative Poisson noise is below 1e-6 here.
                        lambda.round()
                    } else if lambda > 0.0 {
                        Poisson::new(lambda).expect("finite positive rate").sample(&mut rng)
                    } else {
                        0.0
                    };
                    (count > 0.0).then_some((i, j, count as i64))
                })
                .collect()
        })
        .collect();
    let y = CountMatrix::from_triplets(n, m, &triplets.concat())?;
    Ok(Simulation { y, loadings: l0 * scale, factors: f0 * scale, scale, expected_sparsity })
}
