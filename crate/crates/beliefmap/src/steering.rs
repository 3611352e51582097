//! Readout of (steered) activations and the four steering schemes:
//! difference of means, probe direction, translation along the centroid
//! spline, and field-aware kernel regression over the probe family.

use serde::Serialize;

use crate::dataio::{HeadParams, ProbVec, NUM_TOKENS};
use crate::geometry::{eval_curve, field_embed, fit_curve, CurveFit, FieldGeometry};
use crate::linalg::{add, axpy, dot, mean_rows, normalized, sub};
use crate::metrics::{dist_mean_std, fmt_num};
use crate::probes::ProbeField;
use crate::{Error, Result};

/// Ridge added to Gram inversions.
pub const RIDGE: f64 = 1e-8;

/// RMS-normalize, apply the norm gain, unembed, and softmax over the number
/// tokens at temperature `t`.
pub fn readout(x: &[f64], head: &HeadParams, t: f64) -> Result<ProbVec> {
    let d = head.d();
    if x.len() != d {
        return Err(Error::invalid(format!("dimension mismatch: head d={d}, x d={}", x.len())));
    }
    let ms = x.iter().map(|v| v * v).sum::<f64>() / d as f64;
    if !(ms > 0.0) || !ms.is_finite() {
        return Err(Error::numeric("non-finite rms normalization"));
    }
    let inv = 1.0 / (ms + head.norm_epsilon).sqrt();
    let y: Vec<f64> = x.iter().zip(&head.norm_weights).map(|(v, g)| v * inv * *g as f64).collect();
    let logits: Vec<f64> =
        head.unembed.iter().map(|row| row.iter().zip(&y).map(|(u, v)| *u as f64 * v).sum()).collect();
    let by_row = crate::metrics::softmax_t(&logits, t)?;
    let mut p = vec![0.0; NUM_TOKENS];
    for (k, &v) in head.token_value_map.iter().enumerate() {
        p[v as usize] = by_row.as_slice()[k];
    }
    ProbVec::new(p)
}

/// Mean and std of the readout distribution at temperature 1.
pub fn readout_moments(x: &[f64], head: &HeadParams) -> Result<(f64, f64)> {
    Ok(dist_mean_std(&readout(x, head, 1.0)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    DiffMeans,
    ProbeDir,
    FieldAware,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteeringVector {
    pub direction: Vec<f64>,
    pub scheme: SchemeKind,
    pub source: f64,
    pub target: f64,
    /// True when `direction` has unit norm.
    pub unit_norm: bool,
}

/// Centroid of `set_b` minus centroid of `set_a`, unnormalized.
pub fn diff_means(set_a: &[Vec<f64>], set_b: &[Vec<f64>], source: f64, target: f64) -> Result<SteeringVector> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::invalid("empty set"));
    }
    let d = set_a[0].len();
    if set_a.iter().chain(set_b).any(|r| r.len() != d) {
        return Err(Error::invalid("dimension mismatch"));
    }
    Ok(SteeringVector {
        direction: sub(&mean_rows(set_b), &mean_rows(set_a)),
        scheme: SchemeKind::DiffMeans,
        source,
        target,
        unit_norm: false,
    })
}

/// `x + alpha s`.
pub fn apply_linear(x: &[f64], s: &SteeringVector, alpha: f64) -> Result<Vec<f64>> {
    if x.len() != s.direction.len() {
        return Err(Error::invalid("dimension mismatch"));
    }
    Ok(axpy(x, alpha, &s.direction))
}

/// Moves `x` by the displacement of the centroid curve from `mu_from` to
/// `mu_to`, keeping its residual from the curve.
pub fn spline_steer(x: &[f64], curve: &CurveFit, mu_from: f64, mu_to: f64) -> Result<Vec<f64>> {
    if x.len() != curve.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let delta = sub(&eval_curve(curve, mu_to)?, &eval_curve(curve, mu_from)?);
    Ok(add(x, &delta))
}

/// Natural spline through the class centroids (one sigma slice) of a set.
pub fn centroid_curve(centroids: &[(f64, Vec<f64>)]) -> Result<CurveFit> {
    let knots: Vec<f64> = centroids.iter().map(|c| c.0).collect();
    let pts: Vec<Vec<f64>> = centroids.iter().map(|c| c.1.clone()).collect();
    fit_curve(&knots, &pts)
}

/// Normalized difference of the unit probes for `mu_b` and `mu_a`.
pub fn probe_dir(field: &ProbeField, mu_a: f64, mu_b: f64) -> Result<SteeringVector> {
    let units = field.unit_rows()?;
    let ia = field.class_index(mu_a)?;
    let ib = field.class_index(mu_b)?;
    let diff = sub(&units[ib], &units[ia]);
    let direction = normalized(&diff).map_err(|_| Error::invalid("zero probe difference"))?;
    Ok(SteeringVector { direction, scheme: SchemeKind::ProbeDir, source: mu_a, target: mu_b, unit_norm: true })
}

/// Field-aware direction `s*(mu) = sum_i a_i(mu) w_i` over the unit probes,
/// with `a(mu) = (K + ridge I)^{-1} k(mu)` and `k(mu)` the inner products of
/// the class embeddings with the spline through the rank-r embedding.
#[derive(Debug, Clone)]
pub struct FieldSteerer {
    units: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    /// Eigenvectors of the positive modes, one `Vec` per mode.
    modes: Vec<Vec<f64>>,
    embedding: Vec<Vec<f64>>,
    curve: CurveFit,
    ridge: f64,
}

impl FieldSteerer {
    pub fn new(field: &ProbeField, geom: &FieldGeometry, r: usize, ridge: f64) -> Result<Self> {
        let c = field.n_classes();
        if geom.k.nrows() != c {
            return Err(Error::invalid("geometry and field disagree on class count"));
        }
        let pos = geom.positive_modes();
        if ridge <= 0.0 && pos < c {
            return Err(Error::numeric("singular K without ridge"));
        }
        let embedding = field_embed(geom, r)?;
        let curve = fit_curve(&field.class_values, &embedding)?;
        let modes = (0..pos).map(|b| geom.eigenvectors.column(b).iter().copied().collect()).collect();
        Ok(FieldSteerer {
            units: field.unit_rows()?,
            eigenvalues: geom.eigenvalues[..pos].to_vec(),
            modes,
            embedding,
            curve,
            ridge,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.curve.domain()
    }

    /// Kernel-regression weights over the classes at `mu`.
    pub fn weights(&self, mu: f64) -> Result<Vec<f64>> {
        let c_tilde = eval_curve(&self.curve, mu)?;
        let k: Vec<f64> = self.embedding.iter().map(|ci| dot(ci, &c_tilde)).collect();
        let mut a = vec![0.0; k.len()];
        for (lambda, u) in self.eigenvalues.iter().zip(&self.modes) {
            let coef = dot(u, &k) / (lambda + self.ridge);
            a.iter_mut().zip(u).for_each(|(ai, ui)| *ai += coef * ui);
        }
        Ok(a)
    }

    /// Unnormalized `s*(mu)`.
    pub fn raw_direction(&self, mu: f64) -> Result<Vec<f64>> {
        let a = self.weights(mu)?;
        let mut s = vec![0.0; self.units[0].len()];
        for (ai, w) in a.iter().zip(&self.units) {
            s.iter_mut().zip(w).for_each(|(si, wi)| *si += ai * wi);
        }
        Ok(s)
    }

    pub fn direction(&self, mu: f64) -> Result<SteeringVector> {
        let raw = self.raw_direction(mu)?;
        Ok(SteeringVector {
            direction: normalized(&raw)?,
            scheme: SchemeKind::FieldAware,
            source: mu,
            target: mu,
            unit_norm: true,
        })
    }

    /// Displacement `s*(mu) - s*(mu_from)`.
    pub fn offset(&self, mu_from: f64, mu: f64) -> Result<Vec<f64>> {
        Ok(sub(&self.raw_direction(mu)?, &self.raw_direction(mu_from)?))
    }
}

/// Splits the path `mu_from -> mu_to` into `steps` equal parts and returns
/// the per-step increments `s*(mu_j) - s*(mu_{j-1})`. Their running sum is the
/// field-aware displacement at unit gain.
pub fn field_steer(
    field: &ProbeField,
    geom: &FieldGeometry,
    r: usize,
    mu_from: f64,
    mu_to: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    if steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    let st = FieldSteerer::new(field, geom, r, RIDGE)?;
    let (lo, hi) = st.domain();
    for m in [mu_from, mu_to] {
        if !(lo..=hi).contains(&m) {
            return Err(Error::invalid(format!("{m} outside field domain [{lo}, {hi}]")));
        }
    }
    let mus: Vec<f64> = (0..=steps).map(|j| mu_from + (mu_to - mu_from) * j as f64 / steps as f64).collect();
    let dirs = mus.iter().map(|&m| st.raw_direction(m)).collect::<Result<Vec<_>>>()?;
    Ok(dirs.windows(2).map(|w| sub(&w[1], &w[0])).collect())
}

/// Finds the first root of `f(g) = target` on `[lo, hi]` by a uniform scan
/// followed by bisection. `f` is typically an induced readout mean.
pub fn solve_for_target(f: impl Fn(f64) -> Result<f64>, target: f64, lo: f64, hi: f64) -> Result<f64> {
    const SCAN: usize = 400;
    let mut prev_g = lo;
    let mut prev = f(lo)? - target;
    if prev == 0.0 {
        return Ok(lo);
    }
    for i in 1..=SCAN {
        let g = lo + (hi - lo) * i as f64 / SCAN as f64;
        let v = f(g)? - target;
        if v == 0.0 {
            return Ok(g);
        }
        if v.signum() != prev.signum() {
            let (mut a, mut b, mut fa) = (prev_g, g, prev);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = f(m)? - target;
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev_g = g;
        prev = v;
    }
    Err(Error::numeric(format!("target {target} not reached on [{lo}, {hi}]")))
}

/// Gain `g` such that `readout(x0 + g (s*(mu_to) - s*(mu_from)))` has mean
/// `target_mean`. Scale is not fixed by the probe geometry, so the endpoint is
/// matched to the intended output.
pub fn calibrate_field_gain(
    x0: &[f64],
    steerer: &FieldSteerer,
    mu_from: f64,
    mu_to: f64,
    head: &HeadParams,
    target_mean: f64,
    max_gain: f64,
) -> Result<f64> {
    let off = steerer.offset(mu_from, mu_to)?;
    solve_for_target(|g| Ok(readout_moments(&axpy(x0, g, &off), head)?.0), target_mean, 0.0, max_gain)
}

pub enum Scheme<'a> {
    /// Grid values are alpha in `x + alpha s`.
    Linear(&'a SteeringVector),
    /// Grid values are target mu.
    Spline { curve: &'a CurveFit, mu_from: f64 },
    /// Grid values are target mu.
    Field { steerer: &'a FieldSteerer, mu_from: f64, gain: f64 },
}

impl Scheme<'_> {
    fn name(&self) -> &'static str {
        match self {
            Scheme::Linear(s) => match s.scheme {
                SchemeKind::DiffMeans => "linear",
                SchemeKind::ProbeDir => "probe",
                SchemeKind::FieldAware => "field_direction",
            },
            Scheme::Spline { .. } => "spline",
            Scheme::Field { .. } => "field",
        }
    }

    pub fn apply(&self, x: &[f64], param: f64) -> Result<Vec<f64>> {
        match self {
            Scheme::Linear(s) => apply_linear(x, s, param),
            Scheme::Spline { curve, mu_from } => spline_steer(x, curve, *mu_from, param),
            Scheme::Field { steerer, mu_from, gain } => Ok(axpy(x, *gain, &steerer.offset(*mu_from, param)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteerRow {
    pub step: usize,
    pub param: f64,
    pub probs: ProbVec,
    pub mean: f64,
    pub std: f64,
    pub off_manifold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteerReport {
    pub scheme: String,
    pub sigma0: f64,
    pub rows: Vec<SteerRow>,
}

impl SteerReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,alpha_or_mu,mean,std,off_manifold\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                fmt_num(r.param),
                fmt_num(r.mean),
                fmt_num(r.std),
                fmt_num(r.off_manifold)
            ));
        }
        out
    }

    pub fn max_off_manifold(&self) -> f64 {
        self.rows.iter().map(|r| r.off_manifold).fold(0.0, f64::max)
    }
}

/// Applies `scheme` at every grid value to every start point, reads out, and
/// averages the induced distributions over the start points.
pub fn evaluate_steering(
    xs: &[Vec<f64>],
    scheme: &Scheme,
    grid: &[f64],
    head: &HeadParams,
    sigma0: f64,
) -> Result<SteerReport> {
    if xs.is_empty() {
        return Err(Error::invalid("no start activations"));
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(step, &param)| {
            let mut acc = vec![0.0; NUM_TOKENS];
            for x in xs {
                let p = readout(&scheme.apply(x, param)?, head, 1.0)?;
                acc.iter_mut().zip(p.as_slice()).for_each(|(a, b)| *a += b);
            }
            let probs = ProbVec::new(acc)?;
            let (mean, std) = dist_mean_std(&probs);
            Ok(SteerRow { step, param, probs, mean, std, off_manifold: (std - sigma0).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SteerReport { scheme: scheme.name().to_string(), sigma0, rows })
}
