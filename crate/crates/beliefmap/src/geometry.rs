//! Field geometry: spectrum of the probe Gram matrix, kernel-PCA coordinates
//! of the domain, natural cubic splines through them, and the additive
//! mixture-of-manifolds prediction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{is_symmetric, sym_eig_desc};
use crate::{Error, Result};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const POSITIVE_MODE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGeometry {
    pub k: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub class_values: Vec<f64>,
}

impl FieldGeometry {
    pub fn new(k: DMatrix<f64>, class_values: Vec<f64>) -> Result<Self> {
        if class_values.len() != k.nrows() {
            return Err(Error::invalid("one class value per Gram row required"));
        }
        let (eigenvalues, eigenvectors) = field_eig(&k)?;
        Ok(FieldGeometry { k, eigenvalues, eigenvectors, class_values })
    }

    /// Number of eigenvalues above `POSITIVE_MODE_RTOL * max(lambda)`.
    pub fn positive_modes(&self) -> usize {
        count_positive(&self.eigenvalues)
    }

    /// Number of strictly negative modes below the tolerance band; these are
    /// excluded from every embedding.
    pub fn negative_modes(&self) -> usize {
        let tol = tolerance(&self.eigenvalues);
        self.eigenvalues.iter().filter(|&&l| l < -tol).count()
    }
}

fn tolerance(lambda: &[f64]) -> f64 {
    POSITIVE_MODE_RTOL * lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()))
}

fn count_positive(lambda: &[f64]) -> usize {
    let tol = tolerance(lambda);
    lambda.iter().filter(|&&l| l > tol).count()
}

/// Full symmetric eigendecomposition, eigenvalues descending.
pub fn field_eig(k: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !is_symmetric(k, 1e-12) {
        return Err(Error::invalid("Gram matrix is not symmetric"));
    }
    Ok(sym_eig_desc(k))
}

/// Kernel-PCA coordinates `(sqrt(l_1) u_1(i), ..., sqrt(l_r) u_r(i))` for every class.
pub fn field_embed(geom: &FieldGeometry, r: usize) -> Result<Vec<Vec<f64>>> {
    let pos = geom.positive_modes();
    if r == 0 || r > pos {
        return Err(Error::invalid(format!("rank {r} exceeds the {pos} positive modes")));
    }
    let c = geom.k.nrows();
    Ok((0..c).map(|i| (0..r).map(|b| geom.eigenvalues[b].sqrt() * geom.eigenvectors[(i, b)]).collect()).collect())
}

/// Fraction of positive spectral mass in the leading `r` modes.
pub fn cumvar(lambda: &[f64], r: usize) -> Result<f64> {
    if r > lambda.len() {
        return Err(Error::invalid(format!("rank {r} exceeds spectrum length {}", lambda.len())));
    }
    let total: f64 = lambda.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::numeric("all-zero spectrum"));
    }
    Ok(lambda[..r].iter().map(|l| l.max(0.0)).sum::<f64>() / total)
}

/// Smallest rank whose cumulative variance reaches `threshold`.
pub fn intrinsic_dimension(lambda: &[f64], threshold: f64) -> Result<usize> {
    for r in 1..=lambda.len() {
        if cumvar(lambda, r)? >= threshold - 1e-12 {
            return Ok(r);
        }
    }
    Ok(lambda.len())
}

/// Natural cubic spline through `points` at `knots`, one per output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub knots: Vec<f64>,
    /// `values[m][j]`: coordinate j at knot m.
    pub values: Vec<Vec<f64>>,
    /// Second derivatives at the knots, same layout as `values`.
    pub second_derivs: Vec<Vec<f64>>,
    pub boundary: String,
}

pub fn fit_curve(params: &[f64], points: &[Vec<f64>]) -> Result<CurveFit> {
    let m = params.len();
    if m < 3 {
        return Err(Error::invalid("spline needs at least 3 knots"));
    }
    if points.len() != m {
        return Err(Error::invalid("one point per knot required"));
    }
    if params.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("duplicate or unsorted knots"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("points differ in dimension"));
    }
    let h: Vec<f64> = params.windows(2).map(|w| w[1] - w[0]).collect();
    let mut second = vec![vec![0.0; dim]; m];
    // Tridiagonal solve (Thomas) for interior second derivatives, per dimension.
    let n = m - 2;
    for j in 0..dim {
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let k = i + 1;
            diag[i] = 2.0 * (h[k - 1] + h[k]);
            rhs[i] = 6.0 * ((points[k + 1][j] - points[k][j]) / h[k] - (points[k][j] - points[k - 1][j]) / h[k - 1]);
        }
        for i in 1..n {
            let f = h[i] / diag[i - 1];
            diag[i] -= f * h[i];
            rhs[i] -= f * rhs[i - 1];
        }
        for i in (0..n).rev() {
            let upper = if i + 1 < n { h[i + 1] * second[i + 2][j] } else { 0.0 };
            second[i + 1][j] = (rhs[i] - upper) / diag[i];
        }
    }
    Ok(CurveFit { knots: params.to_vec(), values: points.to_vec(), second_derivs: second, boundary: "natural".into() })
}

impl CurveFit {
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
}

pub fn eval_curve(fit: &CurveFit, x: f64) -> Result<Vec<f64>> {
    let (lo, hi) = fit.domain();
    let slack = 1e-9 * (hi - lo);
    if !(x >= lo - slack && x <= hi + slack) {
        return Err(Error::invalid(format!("{x} outside curve domain [{lo}, {hi}]")));
    }
    let x = x.clamp(lo, hi);
    if let Some(m) = fit.knots.iter().position(|&k| k == x) {
        return Ok(fit.values[m].clone());
    }
    let i = fit.knots.partition_point(|&k| k <= x).clamp(1, fit.knots.len() - 1) - 1;
    let (x0, x1) = (fit.knots[i], fit.knots[i + 1]);
    let h = x1 - x0;
    let a = (x1 - x) / h;
    let b = (x - x0) / h;
    Ok((0..fit.dim())
        .map(|j| {
            let (y0, y1) = (fit.values[i][j], fit.values[i + 1][j]);
            let (s0, s1) = (fit.second_derivs[i][j], fit.second_derivs[i + 1][j]);
            a * y0 + b * y1 + ((a * a * a - a) * s0 + (b * b * b - b) * s1) * h * h / 6.0
        })
        .collect())
}

/// Additive prediction `c0 + (c_mu(mu*) - c_mu(mu0)) + (c_sigma(sigma*) - c_sigma(sigma0))`.
pub fn mixture_interp(
    c0: &[f64],
    curve_mu: &CurveFit,
    curve_sigma: &CurveFit,
    mu0: f64,
    sigma0: f64,
    mu_star: f64,
    sigma_star: f64,
) -> Result<Vec<f64>> {
    if curve_mu.dim() != c0.len() || curve_sigma.dim() != c0.len() {
        return Err(Error::invalid("curve dimension differs from anchor"));
    }
    let du = crate::linalg::sub(&eval_curve(curve_mu, mu_star)?, &eval_curve(curve_mu, mu0)?);
    let dv = crate::linalg::sub(&eval_curve(curve_sigma, sigma_star)?, &eval_curve(curve_sigma, sigma0)?);
    Ok(c0.iter().zip(&du).zip(&dv).map(|((c, u), v)| c + u + v).collect())
}
