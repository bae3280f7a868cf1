//! The shifted-log link `g(λ; c) = α_c · log(1 + λ/c)` with `α_c = max(1, c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite link parameter `c > 0` together with its scale `α_c = max(1, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParam {
    c: f64,
    alpha: f64,
}

impl LinkParam {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("link constant c must be finite and positive, got {c}")));
        }
        Ok(Self { c, alpha: c.max(1.0) })
    }

    #[inline]
    pub fn c(&self) -> f64 {
        self.c
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The link parameter for a row with size factor `s`, i.e. `c·s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.c * s)
    }

    /// `g(λ)`.
    pub fn forward(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain("lambda", lambda));
        }
        Ok(self.alpha * (lambda / self.c).ln_1p())
    }

    /// `g⁻¹(b) = c·(exp(b/α) − 1)`.
    pub fn inverse(&self, b: f64) -> Result<f64> {
        if !(b >= 0.0) {
            return Err(Error::Domain("b", b));
        }
        Ok(self.rate(b))
    }

    /// Unchecked inverse link, used on hot paths where `b ≥ 0` holds by construction.
    #[inline]
    pub fn rate(&self, b: f64) -> f64 {
        self.c * (b / self.alpha).exp_m1()
    }

    /// Effect of adding one factor: `α·log((λ' + c)/(λ + c))`, which equals
    /// `l_ik·f_jk` when `λ` and `λ'` exclude and include factor `k`.
    pub fn factor_effect(&self, lambda_without: f64, lambda_with: f64) -> Result<f64> {
        if !(lambda_without > 0.0) {
            return Err(Error::Domain("lambda_without", lambda_without));
        }
        if !(lambda_with > 0.0) {
            return Err(Error::Domain("lambda_with", lambda_with));
        }
        // log((λ'+c)/(λ+c)) = log1p((λ'−λ)/(λ+c)) keeps precision when λ' ≈ λ.
        Ok(self.alpha * ((lambda_with - lambda_without) / (lambda_without + self.c)).ln_1p())
    }
}

/// Link used by a [`FactorModel`](crate::likelihood::FactorModel).
///
/// The identity link is kept separate from the shifted-log family; the two
/// agree only in the `c → ∞` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Link {
    ShiftedLog(LinkParam),
    Identity,
}

impl Link {
    pub fn shifted_log(c: f64) -> Result<Self> {
        LinkParam::new(c).map(Link::ShiftedLog)
    }
}
