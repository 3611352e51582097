//! Synthetic oracle world: activations on a known curved (mu, sigma) manifold
//! and a readout head fitted so that the manifold maps onto discretized
//! normals. Stands in for a language model when checking the analysis code.
//!
//! The feature map is `phi(mu, sigma) = A f(mu~, sigma~)` with
//!
//! ```text
//! f = [1, mu~, sigma~, k sin(pi mu~), k cos(pi mu~), k sin(pi sigma~), k cos(pi sigma~),
//!      k mu~^2, k sigma~^2, x mu~ sigma~]
//! ```
//!
//! where `k` is the curvature knob, `x` the cross term, `mu~` maps [0, 1000]
//! and `sigma~` maps [0, 250] affinely onto [-1, 1], and `A = Q diag(s)` with
//! `Q` a seeded random orthonormal d x 10 frame and `s` the fixed
//! [`FEATURE_SCALES`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{ActivationRecord, ActivationSet, DistSpec, HeadParams, NUM_TOKENS};
use crate::linalg::dot;
use crate::metrics::discretized_normal;
use crate::{Error, Result};

pub const N_FEATURES: usize = 10;
/// Column norms of `A`. The large constant offset keeps activation norms from
/// collapsing along chords; the circle radius sets how strongly the mu curve bends.
pub const FEATURE_SCALES: [f64; N_FEATURES] = [4.0, 0.3, 0.3, 6.0, 6.0, 0.5, 0.5, 0.5, 0.5, 1.0];
pub const MU_DOMAIN: (f64, f64) = (0.0, 1000.0);
pub const SIGMA_DOMAIN: (f64, f64) = (0.0, 250.0);
/// Log-masses below this are clamped before the head is fitted.
const LOG_MASS_FLOOR: f64 = -60.0;
const NORM_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub d: usize,
    pub n_per_class: usize,
    pub mu_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub noise_std: f64,
    pub curvature: f64,
    pub cross_term: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Nine classes mu = 300..700 step 50 at sigma = 100.
    fn default() -> Self {
        SynthConfig {
            d: 64,
            n_per_class: 200,
            mu_grid: (0..9).map(|i| 300.0 + 50.0 * i as f64).collect(),
            sigma_grid: vec![100.0],
            noise_std: 0.1,
            curvature: 1.0,
            cross_term: 0.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    /// Two-parameter grid for the mixture-of-manifolds experiment:
    /// mu = 300..700 step 50, sigma = 20..200 step 30.
    pub fn mixture(cross_term: f64) -> Self {
        SynthConfig {
            sigma_grid: (0..7).map(|i| 20.0 + 30.0 * i as f64).collect(),
            cross_term,
            ..SynthConfig::default()
        }
    }

    /// Cross-term strength used for the non-additive mixture world.
    pub const MIXTURE_CROSS_TERM: f64 = 8.0;

    pub fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() || self.sigma_grid.is_empty() {
            return Err(Error::invalid("grids must be nonempty"));
        }
        if self.d < 2 * N_FEATURES {
            return Err(Error::invalid(format!("d must be at least {}", 2 * N_FEATURES)));
        }
        if !(self.noise_std >= 0.0) || !(self.curvature >= 0.0) || !(self.cross_term >= 0.0) {
            return Err(Error::invalid("noise_std, curvature and cross_term must be non-negative"));
        }
        for &m in &self.mu_grid {
            DistSpec::new(m, 1.0)?;
        }
        for &s in &self.sigma_grid {
            if !(s > 0.0 && s <= SIGMA_DOMAIN.1) {
                return Err(Error::invalid(format!("sigma {s} outside (0, {}]", SIGMA_DOMAIN.1)));
            }
        }
        Ok(())
    }

    /// Resolves `default`, `mixture`, `mixture-cross` or a JSON file path.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(SynthConfig::default()),
            "mixture" => Ok(SynthConfig::mixture(0.0)),
            "mixture-cross" => Ok(SynthConfig::mixture(Self::MIXTURE_CROSS_TERM)),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let cfg: SynthConfig =
                    serde_json::from_str(&text).map_err(|e| Error::format(format!("bad config: {e}")))?;
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub cfg: SynthConfig,
    /// d x 10 embedding of the feature vector.
    pub a: DMatrix<f64>,
    pub head: HeadParams,
    /// RMS logit misfit of the head over its training grid.
    pub head_residual: f64,
}

fn scaled(x: f64, dom: (f64, f64)) -> f64 {
    2.0 * (x - dom.0) / (dom.1 - dom.0) - 1.0
}

impl SynthWorld {
    pub fn features(&self, mu: f64, sigma: f64) -> [f64; N_FEATURES] {
        let (m, s) = (scaled(mu, MU_DOMAIN), scaled(sigma, SIGMA_DOMAIN));
        let (k, x) = (self.cfg.curvature, self.cfg.cross_term);
        use std::f64::consts::PI;
        [
            1.0,
            m,
            s,
            k * (PI * m).sin(),
            k * (PI * m).cos(),
            k * (PI * s).sin(),
            k * (PI * s).cos(),
            k * m * m,
            k * s * s,
            x * m * s,
        ]
    }

    /// Derivatives of the features with respect to mu and sigma (raw units).
    fn feature_jacobian(&self, mu: f64, sigma: f64) -> ([f64; N_FEATURES], [f64; N_FEATURES]) {
        let (m, s) = (scaled(mu, MU_DOMAIN), scaled(sigma, SIGMA_DOMAIN));
        let (k, x) = (self.cfg.curvature, self.cfg.cross_term);
        let dm = 2.0 / (MU_DOMAIN.1 - MU_DOMAIN.0);
        let ds = 2.0 / (SIGMA_DOMAIN.1 - SIGMA_DOMAIN.0);
        use std::f64::consts::PI;
        let fm = [0.0, 1.0, 0.0, k * PI * (PI * m).cos(), -k * PI * (PI * m).sin(), 0.0, 0.0, 2.0 * k * m, 0.0, x * s];
        let fs = [0.0, 0.0, 1.0, 0.0, 0.0, k * PI * (PI * s).cos(), -k * PI * (PI * s).sin(), 0.0, 2.0 * k * s, x * m];
        (fm.map(|v| v * dm), fs.map(|v| v * ds))
    }

    fn embed(&self, f: &[f64; N_FEATURES]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(f)).iter().copied().collect()
    }

    /// Noiseless activation `phi(mu, sigma)`.
    pub fn phi(&self, mu: f64, sigma: f64) -> Vec<f64> {
        self.embed(&self.features(mu, sigma))
    }

    /// Least-squares inverse of `phi`: coarse grid search over the domain, then
    /// Gauss-Newton refinement kept inside the domain.
    pub fn decode(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.cfg.d {
            return Err(Error::invalid("dimension mismatch"));
        }
        let resid = |mu: f64, s: f64| -> f64 { self.phi(mu, s).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum() };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=200 {
            let mu = MU_DOMAIN.0 + (MU_DOMAIN.1 - MU_DOMAIN.0) * i as f64 / 200.0;
            for j in 1..=50 {
                let s = SIGMA_DOMAIN.1 * j as f64 / 50.0;
                let r = resid(mu, s);
                if r < best.0 {
                    best = (r, mu, s);
                }
            }
        }
        let (_, mut mu, mut s) = best;
        for _ in 0..100 {
            let (fm, fs) = self.feature_jacobian(mu, s);
            let jm = self.embed(&fm);
            let js = self.embed(&fs);
            let r: Vec<f64> = self.phi(mu, s).iter().zip(x).map(|(a, b)| b - a).collect();
            let (a11, a12, a22) = (dot(&jm, &jm), dot(&jm, &js), dot(&js, &js));
            let (b1, b2) = (dot(&jm, &r), dot(&js, &r));
            let det = a11 * a22 - a12 * a12;
            if det.abs() < 1e-300 {
                break;
            }
            let step_m = (a22 * b1 - a12 * b2) / det;
            let step_s = (a11 * b2 - a12 * b1) / det;
            mu = (mu + step_m).clamp(MU_DOMAIN.0, MU_DOMAIN.1);
            s = (s + step_s).clamp(1e-9, SIGMA_DOMAIN.1);
            if step_m.abs() < 1e-12 && step_s.abs() < 1e-12 {
                break;
            }
        }
        Ok((mu, s))
    }
}

fn rms_normalize(x: &[f64], eps: f64) -> Vec<f64> {
    let r = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + eps).sqrt();
    x.iter().map(|v| v / r).collect()
}

/// Builds the world for `cfg`: the random frame, then the readout head.
pub fn make_world(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = DMatrix::<f64>::from_fn(cfg.d, N_FEATURES, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let a = DMatrix::from_fn(cfg.d, N_FEATURES, |i, j| q[(i, j)] * FEATURE_SCALES[j]);
    if a.clone().svd(false, false).singular_values.min() < 1e-9 {
        return Err(Error::numeric("feature frame is rank deficient"));
    }
    let mut world = SynthWorld { cfg: cfg.clone(), a, head: placeholder_head(cfg.d), head_residual: 0.0 };
    let (head, residual) = fit_head(&world)?;
    world.head = head;
    world.head_residual = residual;
    Ok(world)
}

fn placeholder_head(d: usize) -> HeadParams {
    HeadParams {
        norm_weights: vec![1.0; d],
        norm_epsilon: NORM_EPSILON,
        unembed: vec![vec![0.0; d]; NUM_TOKENS],
        token_value_map: (0..NUM_TOKENS as i64).collect(),
    }
}

/// Training grid of the head: mu from 50 below to 50 above the class grid in
/// steps of 10, at every sigma of the config.
fn head_grid(cfg: &SynthConfig) -> Vec<(f64, f64)> {
    let lo = cfg.mu_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg.mu_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = ((lo - 50.0) / 10.0).floor().max(0.0) as i64;
    let end = ((hi + 50.0) / 10.0).ceil().min(99.9) as i64;
    let mut grid = Vec::new();
    for m in start..=end {
        for &s in &cfg.sigma_grid {
            grid.push((10.0 * m as f64, s));
        }
    }
    grid
}

/// Minimum-norm least squares from rms-normalized `phi` to per-point centred
/// log-masses of the discretized normals.
fn fit_head(world: &SynthWorld) -> Result<(HeadParams, f64)> {
    let grid = head_grid(&world.cfg);
    let d = world.cfg.d;
    let n = grid.len();
    let mut y = DMatrix::zeros(n, d);
    let mut targets = DMatrix::zeros(n, NUM_TOKENS);
    for (i, &(mu, s)) in grid.iter().enumerate() {
        let row = rms_normalize(&world.phi(mu, s), NORM_EPSILON);
        for j in 0..d {
            y[(i, j)] = row[j];
        }
        let p = discretized_normal(DistSpec::new(mu, s)?)?;
        let logs: Vec<f64> = p.as_slice().iter().map(|&v| v.ln().max(LOG_MASS_FLOOR)).collect();
        let mean = logs.iter().sum::<f64>() / NUM_TOKENS as f64;
        for k in 0..NUM_TOKENS {
            targets[(i, k)] = logs[k] - mean;
        }
    }
    let svd = y.clone().svd(true, true);
    let sol = svd.solve(&targets, 1e-12).map_err(|e| Error::numeric(e.to_string()))?; // d x 1000
    let fitted = &y * &sol;
    let residual = ((fitted - &targets).norm_squared() / (n * NUM_TOKENS) as f64).sqrt();
    let unembed = (0..NUM_TOKENS).map(|k| (0..d).map(|j| sol[(j, k)] as f32).collect()).collect();
    let head = HeadParams { unembed, ..placeholder_head(d) };
    head.validate()?;
    Ok((head, residual))
}

/// Noisy samples `phi(mu, sigma) + eps`, `eps ~ N(0, noise_std^2 I)`, for every
/// grid point in mu-major order. `seq_id` is the grid index, `t` the sample index.
pub fn sample_set(world: &SynthWorld, cfg: &SynthConfig) -> Result<ActivationSet> {
    cfg.validate()?;
    if cfg.d != world.cfg.d {
        return Err(Error::invalid("config width differs from world"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut records = Vec::with_capacity(cfg.mu_grid.len() * cfg.sigma_grid.len() * cfg.n_per_class);
    let mut class = 0;
    for &mu in &cfg.mu_grid {
        for &s in &cfg.sigma_grid {
            let center = world.phi(mu, s);
            for t in 0..cfg.n_per_class {
                let v = center.iter().map(|c| (c + noise.sample(&mut rng)) as f32).collect();
                records.push(ActivationRecord { vector: v, mu, sigma: s, t: t as i64, layer: 0, seq_id: class });
            }
            class += 1;
        }
    }
    ActivationSet::new(records, 0)
}
