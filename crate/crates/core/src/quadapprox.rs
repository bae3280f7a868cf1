//! Degree-2 polynomial approximations `exp(x) ≈ η₀ + η₁x + η₂x²`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intervals narrower than this fall back to the Taylor expansion about 0.
pub const DEGENERATE_WIDTH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApproxMethod {
    Taylor,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadApprox {
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub interval: (f64, f64),
    pub method: ApproxMethod,
}

impl QuadApprox {
    /// Second-order Taylor expansion of `exp` about 0: `(1, 1, 1/2)`.
    pub fn taylor_about_zero() -> Self {
        Self { eta0: 1.0, eta1: 1.0, eta2: 0.5, interval: (0.0, 0.0), method: ApproxMethod::Taylor }
    }

    /// Interpolates `exp` at the three Chebyshev points of `[lo, hi]`.
    ///
    /// Intervals narrower than [`DEGENERATE_WIDTH`] return
    /// [`taylor_about_zero`](Self::taylor_about_zero).
    pub fn chebyshev_on(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::InvalidParameter(format!("invalid approximation interval [{lo}, {hi}]")));
        }
        if hi - lo < DEGENERATE_WIDTH {
            return Ok(Self::taylor_about_zero());
        }
        // Interpolate exp(mid + u) at u ∈ {−δ, 0, δ}: the centred coefficients
        // have closed forms that stay accurate for very narrow intervals.
        let mid = 0.5 * (lo + hi);
        let delta = 0.5 * (hi - lo) * (PI / 6.0).cos();
        let scale = mid.exp();
        let a1 = delta.sinh() / delta;
        let a2 = 2.0 * (0.5 * delta).sinh().powi(2) / (delta * delta);
        let eta2 = scale * a2;
        let eta1 = scale * (a1 - 2.0 * a2 * mid);
        let eta0 = scale * (1.0 - a1 * mid + a2 * mid * mid);
        Ok(Self { eta0, eta1, eta2, interval: (lo, hi), method: ApproxMethod::Chebyshev })
    }

    /// The approximation used by the sparse objective for link constant `c`:
    /// Chebyshev on `[0, log(1 + 1/c)]`, or Taylor about 0.
    pub fn for_link_constant(method: ApproxMethod, c: f64) -> Result<Self> {
        match method {
            ApproxMethod::Taylor => Ok(Self::taylor_about_zero()),
            ApproxMethod::Chebyshev => Self::chebyshev_on(0.0, (1.0 / c).ln_1p()),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eta0 + x * (self.eta1 + x * self.eta2)
    }

    /// Maximum of `|eval(x) − exp(x)|` over `n_points` evenly spaced points of `[lo, hi]`.
    pub fn max_error_on_grid(&self, lo: f64, hi: f64, n_points: usize) -> f64 {
        assert!(n_points >= 2, "grid needs at least two points");
        let step = (hi - lo) / (n_points - 1) as f64;
        (0..n_points)
            .map(|k| {
                let x = if k + 1 == n_points { hi } else { lo + step * k as f64 };
                (self.eval(x) - x.exp()).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// The three Chebyshev points of the first kind mapped onto `[lo, hi]`, in increasing order.
pub fn chebyshev_nodes(lo: f64, hi: f64) -> [f64; 3] {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    // cos((2k+1)π/6) for k = 2, 1, 0
    [5.0, 3.0, 1.0].map(|m: f64| mid + half * (m * PI / 6.0).cos())
}
