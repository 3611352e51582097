//! Small dense-vector helpers shared by the analysis modules. Matrices that need
//! factorizations go through nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn normalized(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::numeric("cannot normalize a zero or non-finite vector"));
    }
    Ok(scale(a, 1.0 / n))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

pub fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for r in rows {
        for (mi, ri) in m.iter_mut().zip(r) {
            *mi += ri;
        }
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = if n == 0 { 0 } else { rows[0].len() };
    DMatrix::from_fn(n, d, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Full symmetric eigendecomposition with eigenvalues sorted descending.
/// Returns `(values, vectors)` with eigenvectors as columns.
pub fn sym_eig_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    sym_eig_sorted(m, |a, b| b.total_cmp(&a))
}

/// Same as [`sym_eig_desc`] but ordered by descending magnitude.
pub fn sym_eig_desc_abs(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    sym_eig_sorted(m, |a, b| b.abs().total_cmp(&a.abs()))
}

fn sym_eig_sorted(m: &DMatrix<f64>, cmp: impl Fn(f64, f64) -> std::cmp::Ordering) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp(eig.eigenvalues[i], eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).clone_owned();
        // Fix the sign so the largest-magnitude entry is positive; keeps output
        // stable across platforms.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(c, &col);
    }
    (values, vectors)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}
