//! Linear field probes: a family of bias-free linear probes `w_i = Psi(mu_i)`
//! trained on activations labelled by a domain value, their cosine Gram
//! structure, local transfer, and interpolation between probes.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::ActivationSet;
use crate::linalg::{cosine, dot, normalized, sym_eig_desc};
use crate::{Error, Result};

const PROBE_MAGIC: &[u8; 4] = b"BMP1";
/// Row block size for the gradient reduction. Fixed so the summation order,
/// and therefore the trained weights, do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeVariant {
    Multiclass,
    Ovr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyper {
    pub weight_decay: f64,
    pub split_fraction: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Early stop once the relative loss change drops below this.
    pub tol: f64,
    /// Subtract the across-class mean row after training.
    pub center_rows: bool,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper { weight_decay: 1e-3, split_fraction: 0.8, seed: 0, max_epochs: 2000, tol: 1e-7, center_rows: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub weight_decay: f64,
    /// Gradient steps actually taken (the maximum over classes for one-vs-rest).
    pub epochs: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub variant: ProbeVariant,
    pub centered: bool,
    pub learning_rate: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeField {
    pub class_values: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub layer: i64,
    pub train_meta: TrainMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl ProbeField {
    /// Field from explicit rows, with zero bias and placeholder training metadata.
    pub fn from_rows(class_values: Vec<f64>, w: Vec<Vec<f64>>, layer: i64) -> Result<Self> {
        if class_values.len() != w.len() || w.is_empty() {
            return Err(Error::invalid("need one row per class value"));
        }
        if class_values.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::invalid("class values must be strictly increasing"));
        }
        let d = w[0].len();
        if w.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("rows must be finite and of equal width"));
        }
        let c = w.len();
        Ok(ProbeField {
            class_values,
            w,
            bias: vec![0.0; c],
            layer,
            train_meta: TrainMeta {
                weight_decay: 0.0,
                epochs: 0,
                split_fraction: 1.0,
                seed: 0,
                variant: ProbeVariant::Multiclass,
                centered: false,
                learning_rate: 0.0,
                final_loss: f64::NAN,
            },
        })
    }

    pub fn d(&self) -> usize {
        self.w[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.w.len()
    }

    pub fn class_index(&self, mu: f64) -> Result<usize> {
        self.class_values
            .iter()
            .position(|&v| v == mu)
            .ok_or_else(|| Error::invalid(format!("class {mu} not present in probe field")))
    }

    /// Rows scaled to unit norm.
    pub fn unit_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.w.iter().map(|r| normalized(r).map_err(|_| Error::numeric("zero-norm probe row"))).collect()
    }
}

/// Per-class shuffled split; each class contributes `round(frac * n_c)` train
/// samples, clamped so both sides keep at least one sample.
pub fn split_indices(labels: &[usize], n_classes: usize, frac: f64, seed: u64) -> SplitIndices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let k = if n < 2 { n } else { ((frac * n as f64).round() as usize).clamp(1, n - 1) };
        train_idx.extend_from_slice(&idx[..k]);
        test_idx.extend_from_slice(&idx[k..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    SplitIndices { train_idx, test_idx }
}

/// Row-major design matrix with labels.
struct Design {
    x: Vec<f64>,
    y: Vec<usize>,
    n: usize,
    d: usize,
}

impl Design {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

fn labelled(set: &ActivationSet) -> Result<(Vec<f64>, Vec<usize>)> {
    set.validate()?;
    let mut classes: Vec<f64> = set.mus();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let labels: Vec<usize> = set.records.iter().map(|r| classes.iter().position(|&c| c == r.mu).unwrap()).collect();
    for (c, mu) in classes.iter().enumerate() {
        if labels.iter().filter(|&&l| l == c).count() < 2 {
            return Err(Error::invalid(format!("class {mu} has fewer than 2 samples")));
        }
    }
    if set.records.iter().any(|r| r.vector.iter().any(|v| !v.is_finite())) {
        return Err(Error::numeric("non-finite activations"));
    }
    Ok((classes, labels))
}

fn design(set: &ActivationSet, labels: &[usize], idx: &[usize]) -> Design {
    let d = set.d;
    let mut x = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        x.extend(set.records[i].vector.iter().map(|&v| v as f64));
    }
    Design { x, y: idx.iter().map(|&i| labels[i]).collect(), n: idx.len(), d }
}

/// Per-feature standard deviation (1 where constant).
fn feature_scale(des: &Design) -> Vec<f64> {
    let n = des.n as f64;
    (0..des.d)
        .map(|j| {
            let m = (0..des.n).map(|i| des.x[i * des.d + j]).sum::<f64>() / n;
            let v = (0..des.n).map(|i| (des.x[i * des.d + j] - m).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn rescale(des: &Design, s: &[f64]) -> Design {
    let x = des.x.chunks_exact(des.d).flat_map(|r| r.iter().zip(s).map(|(v, si)| v / si)).collect();
    Design { x, y: des.y.clone(), n: des.n, d: des.d }
}

/// Largest eigenvalue of `X^T X / n`.
fn gram_lambda_max(des: &Design) -> f64 {
    let mut g = DMatrix::<f64>::zeros(des.d, des.d);
    for i in 0..des.n {
        let r = nalgebra::DVector::from_column_slice(des.row(i));
        g.ger(1.0, &r, &r, 1.0);
    }
    g /= des.n as f64;
    sym_eig_desc(&g).0[0].max(0.0)
}

/// Mean softmax cross-entropy and its gradient for weights `w` (C x d, row-major).
fn softmax_loss_grad(des: &Design, w: &[f64], c: usize) -> (f64, Vec<f64>) {
    let d = des.d;
    let parts: Vec<(f64, Vec<f64>)> = (0..des.n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|b| {
            let mut g = vec![0.0; c * d];
            let mut loss = 0.0;
            let mut z = vec![0.0; c];
            for i in b * CHUNK..((b + 1) * CHUNK).min(des.n) {
                let x = des.row(i);
                for k in 0..c {
                    z[k] = dot(&w[k * d..(k + 1) * d], x);
                }
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for zk in z.iter_mut() {
                    *zk = (*zk - m).exp();
                    s += *zk;
                }
                let y = des.y[i];
                loss -= (z[y] / s).ln();
                for k in 0..c {
                    let r = z[k] / s - if k == y { 1.0 } else { 0.0 };
                    let gk = &mut g[k * d..(k + 1) * d];
                    for (gj, xj) in gk.iter_mut().zip(x) {
                        *gj += r * xj;
                    }
                }
            }
            (loss, g)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; c * d];
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let n = des.n as f64;
    grad.iter_mut().for_each(|v| *v /= n);
    (loss / n, grad)
}

/// Mean binary cross-entropy of `sigmoid(w.x)` against `y == target`.
fn logistic_loss_grad(des: &Design, w: &[f64], target: usize) -> (f64, Vec<f64>) {
    let d = des.d;
    let parts: Vec<(f64, Vec<f64>)> = (0..des.n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|b| {
            let mut g = vec![0.0; d];
            let mut loss = 0.0;
            for i in b * CHUNK..((b + 1) * CHUNK).min(des.n) {
                let x = des.row(i);
                let z = dot(w, x);
                let y = if des.y[i] == target { 1.0 } else { 0.0 };
                // log(1 + e^z) - y z, evaluated stably.
                loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
                let r = 1.0 / (1.0 + (-z).exp()) - y;
                g.iter_mut().zip(x).for_each(|(gj, xj)| *gj += r * xj);
            }
            (loss, g)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let n = des.n as f64;
    grad.iter_mut().for_each(|v| *v /= n);
    (loss / n, grad)
}

/// Fixed-step gradient descent on `loss + wd/2 |w|^2`. Returns weights, steps
/// taken and the final objective.
fn gradient_descent(
    dim: usize,
    lr: f64,
    hyper: &ProbeHyper,
    loss_grad: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> (Vec<f64>, usize, f64) {
    let wd = hyper.weight_decay;
    let mut w = vec![0.0; dim];
    let mut prev: Option<f64> = None;
    let mut steps = 0;
    let mut obj = f64::NAN;
    while steps < hyper.max_epochs {
        let (l, g) = loss_grad(&w);
        obj = l + 0.5 * wd * dot(&w, &w);
        if let Some(p) = prev {
            if (p - obj).abs() <= hyper.tol * p.abs() {
                break;
            }
        }
        prev = Some(obj);
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= lr * (gi + wd * *wi);
        }
        steps += 1;
    }
    (w, steps, obj)
}

fn check_hyper(h: &ProbeHyper) -> Result<()> {
    if !(h.split_fraction > 0.0 && h.split_fraction < 1.0) {
        return Err(Error::invalid("split fraction must lie in (0, 1)"));
    }
    if !(h.weight_decay >= 0.0) || !(h.tol >= 0.0) {
        return Err(Error::invalid("weight decay and tolerance must be non-negative"));
    }
    Ok(())
}

/// Multiclass softmax probe with zero bias. Features are divided by their
/// train-set standard deviation during fitting and the scaling is folded back
/// into the stored rows. Returns the field and held-out accuracy.
pub fn train_multiclass(set: &ActivationSet, hyper: &ProbeHyper) -> Result<(ProbeField, f64)> {
    check_hyper(hyper)?;
    let (classes, labels) = labelled(set)?;
    let c = classes.len();
    let split = split_indices(&labels, c, hyper.split_fraction, hyper.seed);
    let train = design(set, &labels, &split.train_idx);
    let s = feature_scale(&train);
    let xs = rescale(&train, &s);
    let lr = 1.0 / (0.5 * gram_lambda_max(&xs) + hyper.weight_decay);
    let (w, steps, obj) = gradient_descent(c * xs.d, lr, hyper, |w| softmax_loss_grad(&xs, w, c));
    let rows = fold_scale(&w, c, &s);
    finish(set, classes, rows, labels, &split, hyper, ProbeVariant::Multiclass, steps, lr, obj)
}

/// One-vs-rest sigmoid probes, one binary problem per class.
pub fn train_ovr(set: &ActivationSet, hyper: &ProbeHyper) -> Result<(ProbeField, f64)> {
    check_hyper(hyper)?;
    let (classes, labels) = labelled(set)?;
    let c = classes.len();
    let split = split_indices(&labels, c, hyper.split_fraction, hyper.seed);
    let train = design(set, &labels, &split.train_idx);
    let s = feature_scale(&train);
    let xs = rescale(&train, &s);
    let lr = 1.0 / (0.25 * gram_lambda_max(&xs) + hyper.weight_decay);
    let fits: Vec<(Vec<f64>, usize, f64)> =
        (0..c).into_par_iter().map(|k| gradient_descent(xs.d, lr, hyper, |w| logistic_loss_grad(&xs, w, k))).collect();
    let steps = fits.iter().map(|f| f.1).max().unwrap_or(0);
    let obj = fits.iter().map(|f| f.2).sum::<f64>() / c as f64;
    let flat: Vec<f64> = fits.into_iter().flat_map(|f| f.0).collect();
    let rows = fold_scale(&flat, c, &s);
    finish(set, classes, rows, labels, &split, hyper, ProbeVariant::Ovr, steps, lr, obj)
}

fn fold_scale(w: &[f64], c: usize, s: &[f64]) -> Vec<Vec<f64>> {
    let d = s.len();
    (0..c).map(|k| (0..d).map(|j| w[k * d + j] / s[j]).collect()).collect()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    set: &ActivationSet,
    classes: Vec<f64>,
    mut rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    split: &SplitIndices,
    hyper: &ProbeHyper,
    variant: ProbeVariant,
    steps: usize,
    lr: f64,
    obj: f64,
) -> Result<(ProbeField, f64)> {
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numeric("probe training diverged"));
    }
    if hyper.center_rows {
        let m = crate::linalg::mean_rows(&rows);
        for r in rows.iter_mut() {
            r.iter_mut().zip(&m).for_each(|(a, b)| *a -= b);
        }
    }
    let c = classes.len();
    let field = ProbeField {
        class_values: classes,
        w: rows,
        bias: vec![0.0; c],
        layer: set.layer,
        train_meta: TrainMeta {
            weight_decay: hyper.weight_decay,
            epochs: steps,
            split_fraction: hyper.split_fraction,
            seed: hyper.seed,
            variant,
            centered: hyper.center_rows,
            learning_rate: lr,
            final_loss: obj,
        },
    };
    let correct = split
        .test_idx
        .iter()
        .filter(|&&i| argmax(&probe_scores_unchecked(&field, &set.records[i].vector_f64())) == labels[i])
        .count();
    let acc = correct as f64 / split.test_idx.len().max(1) as f64;
    Ok((field, acc))
}

fn probe_scores_unchecked(field: &ProbeField, x: &[f64]) -> Vec<f64> {
    field.w.iter().zip(&field.bias).map(|(w, b)| dot(w, x) + b).collect()
}

/// First index of the maximum; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn probe_scores(field: &ProbeField, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != field.d() {
        return Err(Error::invalid(format!("dimension mismatch: probe d={}, x d={}", field.d(), x.len())));
    }
    Ok(probe_scores_unchecked(field, x))
}

pub fn probe_predict(field: &ProbeField, x: &[f64]) -> Result<f64> {
    Ok(field.class_values[argmax(&probe_scores(field, x)?)])
}

/// Fraction of records whose predicted class equals their mu label.
pub fn accuracy(field: &ProbeField, set: &ActivationSet) -> Result<f64> {
    let mut correct = 0;
    for r in &set.records {
        if probe_predict(field, &r.vector_f64())? == r.mu {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len().max(1) as f64)
}

/// Cosine-similarity Gram of the probe rows, optionally after removing the
/// across-class mean row.
pub fn probe_gram(field: &ProbeField, centered: bool) -> Result<DMatrix<f64>> {
    if field.n_classes() < 2 {
        return Err(Error::invalid("gram needs at least 2 classes"));
    }
    let mut rows = field.w.clone();
    if centered {
        let m = crate::linalg::mean_rows(&rows);
        for r in rows.iter_mut() {
            r.iter_mut().zip(&m).for_each(|(a, b)| *a -= b);
        }
    }
    cosine_gram(&rows)
}

pub fn cosine_gram(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let units = rows
        .iter()
        .map(|r| normalized(r).map_err(|_| Error::numeric("zero-norm probe row")))
        .collect::<Result<Vec<_>>>()?;
    let c = units.len();
    let mut k = DMatrix::zeros(c, c);
    for i in 0..c {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = dot(&units[i], &units[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

fn subset(set: &ActivationSet, mus: &[f64]) -> Result<ActivationSet> {
    for &m in mus {
        if !set.records.iter().any(|r| r.mu == m) {
            return Err(Error::invalid(format!("missing class {m}")));
        }
    }
    let records = set.records.iter().filter(|r| mus.contains(&r.mu)).cloned().collect();
    ActivationSet::new(records, set.layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferPoint {
    pub shift: f64,
    pub accuracy: f64,
}

/// Trains a binary probe on `(mu_a, mu_b)` and evaluates it zero-shot on
/// `(mu_a + shift, mu_b + shift)`, reading the lower class as `mu_a`.
/// A zero shift reports the held-out accuracy on the training pair.
pub fn transfer_curve(
    set: &ActivationSet,
    pair: (f64, f64),
    shifts: &[f64],
    hyper: &ProbeHyper,
) -> Result<Vec<TransferPoint>> {
    let (a, b) = pair;
    if !(a < b) {
        return Err(Error::invalid("pair must be ordered (low, high)"));
    }
    let (field, self_acc) = train_multiclass(&subset(set, &[a, b])?, hyper)?;
    shifts
        .iter()
        .map(|&s| {
            let accuracy = if s == 0.0 { self_acc } else { pair_accuracy(&field.w, set, (a + s, b + s))? };
            Ok(TransferPoint { shift: s, accuracy })
        })
        .collect()
}

/// Accuracy of two rows read as (low class, high class) on a pair of classes.
pub fn pair_accuracy(rows: &[Vec<f64>], set: &ActivationSet, pair: (f64, f64)) -> Result<f64> {
    let sub = subset(set, &[pair.0, pair.1])?;
    let correct = sub
        .records
        .iter()
        .filter(|r| {
            let x = r.vector_f64();
            let pick = argmax(&[dot(&rows[0], &x), dot(&rows[1], &x)]);
            (pick == 0) == (r.mu == pair.0)
        })
        .count();
    Ok(correct as f64 / sub.len() as f64)
}

/// Accuracy of an untrained binary probe with Gaussian random rows.
pub fn random_probe_accuracy(set: &ActivationSet, pair: (f64, f64), seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..set.d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    pair_accuracy(&rows, set, pair)
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid("dimension mismatch"));
    }
    Ok(())
}

/// `alpha * w_a + (1 - alpha) * w_b`.
pub fn interp_linear(w_a: &[f64], w_b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dims(w_a, w_b)?;
    Ok(w_a.iter().zip(w_b).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect())
}

/// Spherical interpolation `sin((1-alpha) theta)/sin theta w_a + sin(alpha theta)/sin theta w_b`
/// on unit inputs. Nearly parallel inputs fall back to normalized linear
/// interpolation in the same convention; antipodal inputs are rejected.
pub fn interp_slerp(w_a: &[f64], w_b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dims(w_a, w_b)?;
    let a = normalized(w_a)?;
    let b = normalized(w_b)?;
    let c = dot(&a, &b).clamp(-1.0, 1.0);
    let theta = c.acos();
    if std::f64::consts::PI - theta < 1e-6 {
        return Err(Error::numeric("undefined geodesic between antipodal probes"));
    }
    if theta < 1e-6 {
        let v: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
        return normalized(&v);
    }
    let (ca, cb) = (((1.0 - alpha) * theta).sin() / theta.sin(), (alpha * theta).sin() / theta.sin());
    Ok(a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect())
}

/// Kernel interpolation between the unit probes of two anchor classes:
/// `w = sum_i a_i w_i` with `a = (G + ridge I)^{-1} k*` and
/// `k* = alpha G[mu_a] + (1 - alpha) G[mu_b]`.
pub fn interp_kernel(field: &ProbeField, mu_a: f64, mu_b: f64, alpha: f64, ridge: f64) -> Result<Vec<f64>> {
    let ia = field.class_index(mu_a)?;
    let ib = field.class_index(mu_b)?;
    let units = field.unit_rows()?;
    let g = cosine_gram(&units)?;
    let c = g.nrows();
    let k = nalgebra::DVector::from_fn(c, |i, _| alpha * g[(ia, i)] + (1.0 - alpha) * g[(ib, i)]);
    let lhs = &g + DMatrix::identity(c, c) * ridge;
    let a = lhs
        .lu()
        .solve(&k)
        .filter(|a| a.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::numeric("singular Gram matrix; supply a ridge"))?;
    let d = field.d();
    let mut out = vec![0.0; d];
    for (ai, u) in a.iter().zip(&units) {
        out.iter_mut().zip(u).for_each(|(o, x)| *o += ai * x);
    }
    Ok(out)
}

/// Leave-one-class-out check: for each interior class, drop its probe, rebuild
/// the interpolant from its two neighbours at the midpoint, and report the
/// cosine with the held-out unit probe.
pub fn leave_one_out_kernel(field: &ProbeField, ridge: f64) -> Result<Vec<(f64, f64)>> {
    let c = field.n_classes();
    let units = field.unit_rows()?;
    (1..c.saturating_sub(1))
        .map(|i| {
            let keep: Vec<usize> = (0..c).filter(|&j| j != i).collect();
            let reduced = ProbeField::from_rows(
                keep.iter().map(|&j| field.class_values[j]).collect(),
                keep.iter().map(|&j| field.w[j].clone()).collect(),
                field.layer,
            )?;
            let (lo, hi) = (field.class_values[i - 1], field.class_values[i + 1]);
            let alpha = (hi - field.class_values[i]) / (hi - lo);
            let w = interp_kernel(&reduced, lo, hi, alpha, ridge)?;
            Ok((field.class_values[i], cosine(&w, &units[i])))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ProbeHeader {
    version: u32,
    d: usize,
    count: usize,
    class_values: Vec<f64>,
    layer: i64,
    train_meta: TrainMeta,
}

/// Probe file: magic `BMP1`, u32 LE header length, JSON header, then the
/// C x d weight block as f64 LE row-major.
pub fn encode_probe(field: &ProbeField) -> Result<Vec<u8>> {
    let header = ProbeHeader {
        version: 1,
        d: field.d(),
        count: field.n_classes(),
        class_values: field.class_values.clone(),
        layer: field.layer,
        train_meta: field.train_meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(PROBE_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in field.w.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_probe(bytes: &[u8]) -> Result<ProbeField> {
    if bytes.len() < 8 || &bytes[..4] != PROBE_MAGIC {
        return Err(Error::format("bad magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| Error::format("truncated"))?;
    let h: ProbeHeader = serde_json::from_slice(body).map_err(|e| Error::format(format!("bad header: {e}")))?;
    let payload = &bytes[8 + hlen..];
    if payload.len() != h.count * h.d * 8 {
        return Err(Error::format("truncated"));
    }
    let vals: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let w = vals.chunks_exact(h.d.max(1)).map(|c| c.to_vec()).collect();
    let mut field = ProbeField::from_rows(h.class_values, w, h.layer)?;
    field.train_meta = h.train_meta;
    Ok(field)
}

pub fn write_probe(field: &ProbeField, path: impl AsRef<Path>) -> Result<()> {
    let p = path.as_ref();
    fs::write(p, encode_probe(field)?).map_err(|e| Error::io(p, e))
}

pub fn read_probe(path: impl AsRef<Path>) -> Result<ProbeField> {
    let p = path.as_ref();
    decode_probe(&fs::read(p).map_err(|e| Error::io(p, e))?)
}
