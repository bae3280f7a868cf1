//! Evaluation tooling: sparsity and correlation metrics, the count simulator,
//! baseline fitters, and the likelihood-ratio comparison of two fits.

mod baselines;
mod metrics;
mod simulate;

pub use baselines::{fit_frobenius_log1p, fit_identity_mu, BaselineFit};
pub use metrics::{hoyer_sparsity, mean_abs_spearman, metrics_report, MetricsReport};
pub use simulate::{simulate, Simulation};

use serde::{Deserialize, Serialize};

use crate::countmat::CountMatrix;
use crate::error::Result;
use crate::likelihood::{exact_loglik, FactorModel};

/// A value together with a flag marking a degenerate input that received a
/// conventional value instead of the formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatio {
    /// `ℓ(approx fit) − ℓ(exact fit)`, both under the exact objective.
    pub delta_ll: f64,
    /// `exp(delta_ll / (n·m))`.
    pub per_entry_ratio: f64,
}

/// Compares two fits of `y` under the exact log-likelihood.
pub fn likelihood_ratio_report(
    y: &CountMatrix,
    fit_exact: &FactorModel,
    fit_approx: &FactorModel,
) -> Result<LikelihoodRatio> {
    let delta_ll = exact_loglik(y, fit_approx)? - exact_loglik(y, fit_exact)?;
    let cells = (y.n_rows() * y.n_cols()) as f64;
    Ok(LikelihoodRatio { delta_ll, per_entry_ratio: (delta_ll / cells).exp() })
}
