//! Geometry of the small-`c` limit for two factors.
//!
//! As `c → 0⁺` the normalised mean vector of a sample with loadings `l`
//! approaches `softmax(F l)`. Letting `l` grow along different directions
//! shows which normalised means the model can reach: mixtures of two
//! *adjacent* vertices of the upper-right hull of the rows of `F`, and
//! nothing supported on rows off that hull.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::Flagged;

/// Relative tolerance of the collinearity test.
const COLLINEAR_TOL: f64 = 1e-12;

/// One edge of the hull, from vertex `from` to vertex `to` (row indices).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HullEdge {
    pub from: usize,
    pub to: usize,
    /// Unit normal with positive components, orthogonal to `direction`.
    pub normal: [f64; 2],
    /// `P(to) − P(from)`.
    pub direction: [f64; 2],
}

/// Vertices of the non-dominated part of the convex hull, by increasing first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperRightHull {
    pub vertex_indices: Vec<usize>,
    pub edges: Vec<HullEdge>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Rejects duplicate points and collinear triples.
///
/// Runs in `O(p² log p)`: around each point the directions to all others are
/// sorted by angle and neighbouring directions are checked for parallelism.
pub fn check_general_position(points: &[[f64; 2]]) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::InvalidParameter(format!("point {i} is not finite")));
        }
    }
    for i in 0..points.len() {
        let o = points[i];
        let mut dirs: Vec<(f64, usize)> = Vec::with_capacity(points.len());
        for (j, p) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            if *p == o {
                return Err(Error::DuplicatePoint(i.min(j), i.max(j)));
            }
            // Angle folded onto [0, π) so opposite directions also collide.
            let mut angle = (p[1] - o[1]).atan2(p[0] - o[0]);
            if angle < 0.0 {
                angle += std::f64::consts::PI;
            }
            if angle >= std::f64::consts::PI {
                angle -= std::f64::consts::PI;
            }
            dirs.push((angle, j));
        }
        dirs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = dirs.len();
        for w in 1..n {
            check_pair(points, i, dirs[w - 1].1, dirs[w].1)?;
        }
        // Directions just below π are nearly parallel to those just above 0.
        if n >= 3 {
            check_pair(points, i, dirs[n - 1].1, dirs[0].1)?;
        }
    }
    Ok(())
}

fn check_pair(points: &[[f64; 2]], i: usize, a: usize, b: usize) -> Result<()> {
    let (o, p, q) = (points[i], points[a], points[b]);
    let scale = ((p[0] - o[0]).hypot(p[1] - o[1])) * ((q[0] - o[0]).hypot(q[1] - o[1]));
    if cross(o, p, q).abs() <= COLLINEAR_TOL * scale {
        let mut t = [i, a, b];
        t.sort_unstable();
        return Err(Error::Collinear(t[0], t[1], t[2]));
    }
    Ok(())
}

/// The upper-right hull of `points`, which must be in general position.
pub fn upper_right_hull(points: &[[f64; 2]]) -> Result<UpperRightHull> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("hull needs at least one point".into()));
    }
    check_general_position(points)?;

    // Pareto-maximal points by increasing x: a sweep from the right keeping
    // points that are higher than everything to their right.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b][0].total_cmp(&points[a][0]).then(points[b][1].total_cmp(&points[a][1])));
    let mut pareto = Vec::new();
    let mut best_y = f64::NEG_INFINITY;
    for &i in &order {
        if points[i][1] > best_y {
            pareto.push(i);
            best_y = points[i][1];
        }
    }
    pareto.reverse();

    // Concave chain over them (monotone chain, upper part).
    let mut chain: Vec<usize> = Vec::new();
    for &i in &pareto {
        while chain.len() >= 2
            && cross(points[chain[chain.len() - 2]], points[chain[chain.len() - 1]], points[i]) >= 0.0
        {
            chain.pop();
        }
        chain.push(i);
    }

    let edges = chain
        .windows(2)
        .map(|w| {
            let (a, b) = (points[w[0]], points[w[1]]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let norm = d[0].hypot(d[1]);
            HullEdge { from: w[0], to: w[1], normal: [-d[1] / norm, d[0] / norm], direction: d }
        })
        .collect();
    Ok(UpperRightHull { vertex_indices: chain, edges })
}

impl UpperRightHull {
    /// A direction in the interior of the normal cone of vertex `k`:
    /// the sum of the adjacent edge normals, with `e₂` before the first
    /// vertex and `e₁` after the last.
    pub fn vertex_direction(&self, k: usize) -> Result<[f64; 2]> {
        let m = self.vertex_indices.len();
        if k >= m {
            return Err(Error::InvalidParameter(format!("vertex {k} of {m}")));
        }
        let before = if k == 0 { [0.0, 1.0] } else { self.edges[k - 1].normal };
        let after = if k + 1 == m { [1.0, 0.0] } else { self.edges[k].normal };
        Ok([before[0] + after[0], before[1] + after[1]])
    }

    /// Loading direction `t·z_q + φ·d_q` whose limit puts mass `ω` on the
    /// first vertex of edge `q` and `1 − ω` on the second. `ω ∈ {0, 1}`
    /// selects the vertex direction `t·x_k` instead.
    pub fn edge_direction(&self, q: usize, omega: f64, t: f64) -> Result<[f64; 2]> {
        if q >= self.edges.len() {
            return Err(Error::InvalidParameter(format!("edge {q} of {}", self.edges.len())));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParameter(format!("omega must lie in [0, 1], got {omega}")));
        }
        if omega == 1.0 || omega == 0.0 {
            let x = self.vertex_direction(if omega == 1.0 { q } else { q + 1 })?;
            return Ok([t * x[0], t * x[1]]);
        }
        let e = &self.edges[q];
        let d2 = e.direction[0].powi(2) + e.direction[1].powi(2);
        let phi = ((1.0 - omega) / omega).ln() / d2;
        let l = [t * e.normal[0] + phi * e.direction[0], t * e.normal[1] + phi * e.direction[1]];
        if l[0] < 0.0 || l[1] < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "t = {t} is too small for omega = {omega}: loadings turn negative"
            )));
        }
        Ok(l)
    }
}

/// `λ_j ∝ e^{η_j} − 1`, normalised to sum 1 without overflow.
pub fn normalized_rates(eta: &[f64]) -> Result<Vec<f64>> {
    let top = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = eta.iter().map(|&e| (e - top).exp() - (-top).exp()).collect();
    let total: f64 = shifted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("linear predictors give no positive rate".into()));
    }
    Ok(shifted.iter().map(|v| v / total).collect())
}

pub fn softmax(eta: &[f64]) -> Vec<f64> {
    let top = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|&e| (e - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Normalised mean vector at loadings along [`UpperRightHull::edge_direction`].
pub fn limiting_direction(
    hull: &UpperRightHull,
    points: &[[f64; 2]],
    q: usize,
    omega: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let l = hull.edge_direction(q, omega, t)?;
    let eta: Vec<f64> = points.iter().map(|f| f[0] * l[0] + f[1] * l[1]).collect();
    normalized_rates(&eta)
}

/// `max_j |λ_j − softmax(η)_j|` with `λ_j ∝ e^{η_j} − 1`. When no rate is
/// positive the exact form is undefined; the uniform vector stands in and the
/// result is flagged.
pub fn softmax_gap(eta: &[f64]) -> Flagged {
    let soft = softmax(eta);
    let (exact, flagged) = match normalized_rates(eta) {
        Ok(v) => (v, false),
        Err(_) => (vec![1.0 / eta.len() as f64; eta.len()], true),
    };
    let value = exact.iter().zip(&soft).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Flagged { value, flagged }
}
