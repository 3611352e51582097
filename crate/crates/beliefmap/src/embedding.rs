//! PCA on activations and intensive PCA (inPCA) on probability vectors.

use nalgebra::DMatrix;

use crate::dataio::ProbVec;
use crate::linalg::{sym_eig_desc, sym_eig_desc_abs};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub coords: Vec<Vec<f64>>,
    /// PCA: component variances. inPCA: signed eigenvalues of the
    /// double-centred divergence matrix.
    pub axis_weights: Vec<f64>,
    /// Fraction of total (absolute) weight carried by each axis.
    pub explained: Vec<f64>,
    /// Per-feature mean removed before projection (PCA only).
    pub mean_vector: Option<Vec<f64>>,
    /// Unit principal directions (PCA only), one per axis.
    pub components: Option<Vec<Vec<f64>>>,
}

impl EmbeddingResult {
    /// CSV with one row per point: label columns first, then `c0..c{k-1}`.
    pub fn to_csv(&self, labels: &[(&str, Vec<f64>)]) -> String {
        let k = self.axis_weights.len();
        let mut header: Vec<String> = labels.iter().map(|(n, _)| n.to_string()).collect();
        header.extend((0..k).map(|i| format!("c{i}")));
        let mut out = header.join(",") + "\n";
        for (i, row) in self.coords.iter().enumerate() {
            let mut cells: Vec<String> = labels.iter().map(|(_, v)| crate::metrics::fmt_num(v[i])).collect();
            cells.extend(row.iter().map(|&x| crate::metrics::fmt_num(x)));
            out.push_str(&(cells.join(",") + "\n"));
        }
        out
    }
}

pub fn pca(x: &[Vec<f64>], k: usize) -> Result<EmbeddingResult> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("pca needs at least 2 points"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows differ in dimension"));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!("k={k} must lie in 1..={}", n.min(d))));
    }
    let mean = crate::linalg::mean_rows(x);
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let (vals, vecs) = sym_eig_desc(&cov);
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let comps: Vec<Vec<f64>> = (0..k).map(|c| vecs.column(c).iter().copied().collect()).collect();
    let coords = (0..n)
        .map(|i| comps.iter().map(|c| centered.row(i).iter().zip(c).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let weights: Vec<f64> = vals[..k].iter().map(|v| v.max(0.0)).collect();
    let explained = weights.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    Ok(EmbeddingResult { coords, axis_weights: weights, explained, mean_vector: Some(mean), components: Some(comps) })
}

/// Symmetric Bhattacharyya divergence `-ln sum_k sqrt(p_k q_k)`.
pub fn bhattacharyya(p: &ProbVec, q: &ProbVec) -> f64 {
    let bc: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a * b).sqrt()).sum();
    if bc <= 0.0 {
        f64::INFINITY
    } else {
        (-bc.ln()).max(0.0)
    }
}

pub fn divergence_matrix(ps: &[ProbVec]) -> DMatrix<f64> {
    let n = ps.len();
    let mut dm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = bhattacharyya(&ps[i], &ps[j]);
            dm[(i, j)] = v;
            dm[(j, i)] = v;
        }
    }
    dm
}

/// Classical-MDS embedding of the Bhattacharyya divergence matrix, keeping
/// negative eigenvalues as time-like axes. Axes are ordered by |eigenvalue|.
pub fn inpca(ps: &[ProbVec], k: usize) -> Result<EmbeddingResult> {
    let n = ps.len();
    if n < 2 {
        return Err(Error::invalid("inpca needs at least 2 distributions"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k={k} must lie in 1..={n}")));
    }
    let dm = divergence_matrix(ps);
    if dm.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("disjoint supports give an infinite divergence"));
    }
    let w = double_center(&dm);
    let (vals, vecs) = sym_eig_desc_abs(&w);
    let coords = (0..n).map(|i| (0..k).map(|b| vals[b].abs().sqrt() * vecs[(i, b)]).collect()).collect();
    let total: f64 = vals.iter().map(|v| v.abs()).sum();
    let explained = vals[..k].iter().map(|v| if total > 0.0 { v.abs() / total } else { 0.0 }).collect();
    Ok(EmbeddingResult { coords, axis_weights: vals[..k].to_vec(), explained, mean_vector: None, components: None })
}

/// `-1/2 J D J` with `J` the centering matrix.
pub fn double_center(dm: &DMatrix<f64>) -> DMatrix<f64> {
    let n = dm.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| dm.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| -0.5 * (dm[(i, j)] - row_means[i] - row_means[j] + grand))
}

/// Signed squared embedding distance `sum_b sign(l_b) (a_b - c_b)^2`.
pub fn signed_sq_distance(a: &[f64], c: &[f64], axis_weights: &[f64]) -> f64 {
    a.iter().zip(c).zip(axis_weights).map(|((x, y), w)| w.signum() * (x - y).powi(2)).sum()
}

/// Relative stress `sqrt(sum (d2_ij - D_ij)^2 / sum D_ij^2)` of an inPCA
/// embedding against the divergence matrix it was built from.
pub fn inpca_stress(emb: &EmbeddingResult, ps: &[ProbVec]) -> f64 {
    let dm = divergence_matrix(ps);
    let n = ps.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..i {
            let d2 = signed_sq_distance(&emb.coords[i], &emb.coords[j], &emb.axis_weights);
            num += (d2 - dm[(i, j)]).powi(2);
            den += dm[(i, j)].powi(2);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}
