use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Flagged;
use crate::error::{Error, Result};
use crate::fitter::CParam;
use crate::likelihood::FactorModel;

/// Hoyer's sparsity `(√n − ‖x‖₁/‖x‖₂)/(√n − 1)`. The all-zero vector scores 1 and is flagged.
pub fn hoyer_sparsity(x: ArrayView1<f64>) -> Result<Flagged> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Hoyer sparsity needs at least 2 entries, got {n}")));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain("Hoyer input", *v));
    }
    let l1: f64 = x.sum();
    if l1 == 0.0 {
        return Ok(Flagged { value: 1.0, flagged: true });
    }
    let l2 = x.dot(&x).sqrt();
    let root_n = (n as f64).sqrt();
    let value = ((root_n - l1 / l2) / (root_n - 1.0)).clamp(0.0, 1.0);
    Ok(Flagged { value, flagged: false })
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(x: ArrayView1<f64>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean of `|ρ|` over all unordered column pairs, with Spearman's `ρ`.
/// Pairs involving a constant column count as 0 and set the flag.
pub fn mean_abs_spearman(f: ArrayView2<f64>) -> Result<Flagged> {
    let k = f.ncols();
    if k < 2 {
        return Err(Error::InvalidParameter(format!("rank correlation needs at least 2 columns, got {k}")));
    }
    let ranks: Vec<Vec<f64>> = f.columns().into_iter().map(average_ranks).collect();
    let (mut total, mut flagged) = (0.0, false);
    for a in 0..k {
        for b in a + 1..k {
            match pearson(&ranks[a], &ranks[b]) {
                Some(rho) => total += rho.abs(),
                None => flagged = true,
            }
        }
    }
    Ok(Flagged { value: total / (k * (k - 1) / 2) as f64, flagged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub c: CParam,
    #[serde(rename = "mean_abs_spearman_F")]
    pub mean_abs_spearman_f: f64,
    #[serde(rename = "mean_hoyer_L")]
    pub mean_hoyer_l: f64,
    #[serde(rename = "mean_hoyer_F")]
    pub mean_hoyer_f: f64,
    #[serde(rename = "hoyer_L")]
    pub hoyer_l: Vec<f64>,
    #[serde(rename = "hoyer_F")]
    pub hoyer_f: Vec<f64>,
    /// Set when any metric met a degenerate column.
    pub flagged: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "c,mean_abs_spearman_F,mean_hoyer_L,mean_hoyer_F";

    pub fn csv_row(&self) -> String {
        format!("{},{:.16e},{:.16e},{:.16e}", self.c, self.mean_abs_spearman_f, self.mean_hoyer_l, self.mean_hoyer_f)
    }
}

/// Column-wise Hoyer sparsity of `L` and `F` and the mean |Spearman| between factors.
pub fn metrics_report(model: &FactorModel, c: CParam) -> Result<MetricsReport> {
    let columns = |m: ArrayView2<f64>| -> Result<(Vec<f64>, bool)> {
        let mut flagged = false;
        let values = m
            .columns()
            .into_iter()
            .map(|col| {
                let h = hoyer_sparsity(col)?;
                flagged |= h.flagged;
                Ok(h.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((values, flagged))
    };
    let (hoyer_l, flag_l) = columns(model.loadings.view())?;
    let (hoyer_f, flag_f) = columns(model.factors.view())?;
    let spearman = mean_abs_spearman(model.factors.view())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(MetricsReport {
        c,
        mean_abs_spearman_f: spearman.value,
        mean_hoyer_l: mean(&hoyer_l),
        mean_hoyer_f: mean(&hoyer_f),
        hoyer_l,
        hoyer_f,
        flagged: flag_l || flag_f || spearman.flagged,
    })
}
