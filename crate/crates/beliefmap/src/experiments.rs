//! End-to-end experiment pipelines on the synthetic world. The CLI bundles
//! their outputs; the acceptance suite checks them.

use serde::Serialize;

use crate::dataio::{ActivationSet, DistSpec};
use crate::embedding::{inpca, inpca_stress};
use crate::geometry::{cumvar, field_embed, fit_curve, mixture_interp, FieldGeometry};
use crate::linalg::{norm, sub};
use crate::metrics::{discretized_normal, fmt_num};
use crate::observer::{closed_form_mean, closed_form_std, observer_moments, ObserverPrior};
use crate::probes::{
    leave_one_out_kernel, probe_gram, random_probe_accuracy, train_multiclass, transfer_curve, ProbeField, ProbeHyper,
    TransferPoint,
};
use crate::seriesgen::{gen_series, Segment};
use crate::steering::{
    calibrate_field_gain, centroid_curve, diff_means, evaluate_steering, probe_dir, readout_moments, solve_for_target,
    spline_steer, FieldSteerer, Scheme, SteerReport, RIDGE,
};
use crate::synth::{make_world, sample_set, SynthConfig, SynthWorld};
use crate::{Error, Result};

/// A world together with its sampled activations.
pub struct Lab {
    pub world: SynthWorld,
    pub set: ActivationSet,
}

impl Lab {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        let world = make_world(cfg)?;
        let set = sample_set(&world, cfg)?;
        Ok(Lab { world, set })
    }

    /// Sample centroid of the class `(mu, sigma)`.
    pub fn centroid(&self, mu: f64, sigma: f64) -> Result<Vec<f64>> {
        self.set
            .class_centroids()
            .into_iter()
            .find(|c| c.0 == mu && c.1 == sigma)
            .map(|c| c.2)
            .ok_or_else(|| Error::invalid(format!("no class at mu={mu}, sigma={sigma}")))
    }

    /// Centroids along mu at a fixed sigma, as `(mu, centroid)`.
    pub fn mu_slice(&self, sigma: f64) -> Vec<(f64, Vec<f64>)> {
        self.set.class_centroids().into_iter().filter(|c| c.1 == sigma).map(|c| (c.0, c.2)).collect()
    }

    fn rows_at(&self, mu: f64) -> Vec<Vec<f64>> {
        self.set.select_mu(mu).iter().map(|r| r.vector_f64()).collect()
    }

    pub fn probe_hyper(&self) -> ProbeHyper {
        ProbeHyper { seed: self.world.cfg.seed, ..ProbeHyper::default() }
    }

    /// Multiclass field over the mu classes (first sigma slice only).
    pub fn train_field(&self) -> Result<(ProbeField, f64)> {
        let sigma0 = self.world.cfg.sigma_grid[0];
        let records = self.set.records.iter().filter(|r| r.sigma == sigma0).cloned().collect();
        train_multiclass(&ActivationSet::new(records, self.set.layer)?, &self.probe_hyper())
    }
}

fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSteering {
    /// Linear gain at which the induced mean reaches the target.
    pub alpha: f64,
    pub linear: SteerReport,
    /// Spline target at which the induced mean reaches the target.
    pub spline_mu_to: f64,
    pub spline: SteerReport,
}

impl PrimalSteering {
    pub fn linear_end(&self) -> (f64, f64, f64) {
        end(&self.linear)
    }

    pub fn spline_end(&self) -> (f64, f64, f64) {
        end(&self.spline)
    }
}

fn end(r: &SteerReport) -> (f64, f64, f64) {
    let last = r.rows.last().expect("nonempty sweep");
    (last.mean, last.std, last.off_manifold)
}

/// Difference-of-means and centroid-spline steering from the `mu_from`
/// centroid, each swept until the induced mean equals `target_mean`.
pub fn primal_steering(lab: &Lab, mu_from: f64, mu_to: f64, target_mean: f64, steps: usize) -> Result<PrimalSteering> {
    let sigma0 = lab.world.cfg.sigma_grid[0];
    let head = &lab.world.head;
    let x0 = lab.centroid(mu_from, sigma0)?;
    let s = diff_means(&lab.rows_at(mu_from), &lab.rows_at(mu_to), mu_from, mu_to)?;
    let alpha = solve_for_target(
        |a| Ok(readout_moments(&crate::steering::apply_linear(&x0, &s, a)?, head)?.0),
        target_mean,
        0.0,
        1.0,
    )?;
    let linear =
        evaluate_steering(std::slice::from_ref(&x0), &Scheme::Linear(&s), &grid(0.0, alpha, steps), head, sigma0)?;
    let curve = centroid_curve(&lab.mu_slice(sigma0))?;
    let (_, hi) = curve.domain();
    let spline_mu_to = solve_for_target(
        |m| Ok(readout_moments(&spline_steer(&x0, &curve, mu_from, m)?, head)?.0),
        target_mean,
        mu_from,
        hi,
    )?;
    let spline = evaluate_steering(
        &[x0],
        &Scheme::Spline { curve: &curve, mu_from },
        &grid(mu_from, spline_mu_to, steps),
        head,
        sigma0,
    )?;
    Ok(PrimalSteering { alpha, linear, spline_mu_to, spline })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSteering {
    pub accuracy: f64,
    /// Probe-direction sweep over alpha.
    pub probe: SteerReport,
    /// Field sweep over mu at gain 1, kept as a diagnostic.
    pub unit_gain: SteerReport,
    /// Calibrated gain and field sweep over mu, or the calibration failure.
    pub field: std::result::Result<(f64, SteerReport), String>,
}

/// Probe-direction sweep `mu_from -> mu_far` over `alpha in [0, 2 |w_far - w_from|]`
/// (stored rows) and field-aware sweep
/// `mu_from -> mu_to` with the gain matched so the endpoint mean is `mu_to`.
pub fn field_steering(
    lab: &Lab,
    mu_from: f64,
    mu_to: f64,
    mu_far: f64,
    rank: usize,
    steps: usize,
) -> Result<FieldSteering> {
    let sigma0 = lab.world.cfg.sigma_grid[0];
    let head = &lab.world.head;
    let x0 = lab.centroid(mu_from, sigma0)?;
    let (field, accuracy) = lab.train_field()?;
    let pd = probe_dir(&field, mu_from, mu_far)?;
    let span = 2.0 * norm(&sub(&field.w[field.class_index(mu_far)?], &field.w[field.class_index(mu_from)?]));
    let probe =
        evaluate_steering(std::slice::from_ref(&x0), &Scheme::Linear(&pd), &grid(0.0, span, steps), head, sigma0)?;
    let geom = FieldGeometry::new(probe_gram(&field, false)?, field.class_values.clone())?;
    let steerer = FieldSteerer::new(&field, &geom, rank, RIDGE)?;
    let mu_grid = grid(mu_from, mu_to, steps);
    let unit = Scheme::Field { steerer: &steerer, mu_from, gain: 1.0 };
    let unit_gain = evaluate_steering(std::slice::from_ref(&x0), &unit, &mu_grid, head, sigma0)?;
    let field_result = match calibrate_field_gain(&x0, &steerer, mu_from, mu_to, head, mu_to, 100.0) {
        Ok(gain) => {
            let scheme = Scheme::Field { steerer: &steerer, mu_from, gain };
            Ok((gain, evaluate_steering(&[x0], &scheme, &mu_grid, head, sigma0)?))
        }
        Err(e) => Err(e.to_string()),
    };
    Ok(FieldSteering { accuracy, probe, unit_gain, field: field_result })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureReport {
    pub cross_term: f64,
    pub anchor: (f64, f64),
    /// RMS over the off-axis grid of `|prediction - sample centroid|`.
    pub rms_error: f64,
    /// `3 noise_std sqrt(d / n_per_class)`: three times the expected norm
    /// of the sampling error of one centroid.
    pub noise_floor: f64,
    pub points: Vec<(f64, f64, f64)>,
}

/// Additive prediction of every off-axis centroid from the mu curve through
/// `sigma = anchor.1` and the sigma curve through `mu = anchor.0`.
pub fn mixture_experiment(cfg: &SynthConfig, anchor: (f64, f64)) -> Result<MixtureReport> {
    let lab = Lab::new(cfg)?;
    let cents = lab.set.class_centroids();
    let (mu0, s0) = anchor;
    let mu_line: Vec<&(f64, f64, Vec<f64>)> = cents.iter().filter(|c| c.1 == s0).collect();
    let sigma_line: Vec<&(f64, f64, Vec<f64>)> = cents.iter().filter(|c| c.0 == mu0).collect();
    let curve_mu = fit_curve(
        &mu_line.iter().map(|c| c.0).collect::<Vec<_>>(),
        &mu_line.iter().map(|c| c.2.clone()).collect::<Vec<_>>(),
    )?;
    let curve_sigma = fit_curve(
        &sigma_line.iter().map(|c| c.1).collect::<Vec<_>>(),
        &sigma_line.iter().map(|c| c.2.clone()).collect::<Vec<_>>(),
    )?;
    let c0 = lab.centroid(mu0, s0)?;
    let mut points = Vec::new();
    for (mu, s, c) in cents.iter().filter(|c| c.0 != mu0 && c.1 != s0) {
        let pred = mixture_interp(&c0, &curve_mu, &curve_sigma, mu0, s0, *mu, *s)?;
        points.push((*mu, *s, norm(&sub(&pred, c))));
    }
    if points.is_empty() {
        return Err(Error::invalid("grid has no off-axis points"));
    }
    let rms_error = (points.iter().map(|p| p.2 * p.2).sum::<f64>() / points.len() as f64).sqrt();
    let noise_floor = 3.0 * cfg.noise_std * (cfg.d as f64 / cfg.n_per_class as f64).sqrt();
    Ok(MixtureReport { cross_term: cfg.cross_term, anchor, rms_error, noise_floor, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfpReport {
    pub accuracy: f64,
    pub epochs: usize,
    pub gram_diag_max_dev: f64,
    /// `(mu, cosine)` of each held-out interior probe with its interpolant.
    pub leave_one_out: Vec<(f64, f64)>,
    pub noise_floor: f64,
    pub transfer: Vec<TransferPoint>,
    pub random_probe: f64,
    pub class_values: Vec<f64>,
    pub gram: Vec<Vec<f64>>,
}

pub fn lfp_suite(lab: &Lab, pair: (f64, f64), shifts: &[f64]) -> Result<LfpReport> {
    let (field, accuracy) = lab.train_field()?;
    let k = probe_gram(&field, false)?;
    let c = k.nrows();
    let gram_diag_max_dev = (0..c).map(|i| (k[(i, i)] - 1.0).abs()).fold(0.0, f64::max);
    let transfer = transfer_curve(&lab.set, pair, shifts, &lab.probe_hyper())?;
    Ok(LfpReport {
        accuracy,
        epochs: field.train_meta.epochs,
        gram_diag_max_dev,
        leave_one_out: leave_one_out_kernel(&field, RIDGE)?,
        noise_floor: 1.0 / (field.d() as f64).sqrt(),
        transfer,
        random_probe: random_probe_accuracy(&lab.set, pair, lab.world.cfg.seed)?,
        class_values: field.class_values.clone(),
        gram: (0..c).map(|i| (0..c).map(|j| k[(i, j)]).collect()).collect(),
    })
}

/// Field spectrum and rank-`r` embedding of the trained probe family.
pub fn field_geometry(lab: &Lab) -> Result<(ProbeField, FieldGeometry)> {
    let (field, _) = lab.train_field()?;
    let geom = FieldGeometry::new(probe_gram(&field, false)?, field.class_values.clone())?;
    Ok((field, geom))
}

pub fn spectrum_csv(geom: &FieldGeometry) -> Result<String> {
    let mut out = String::from("index,eigenvalue,cumvar\n");
    for (i, l) in geom.eigenvalues.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", fmt_num(*l), fmt_num(cumvar(&geom.eigenvalues, i + 1)?)));
    }
    Ok(out)
}

pub fn field_embedding_csv(geom: &FieldGeometry, r: usize) -> Result<String> {
    let coords = field_embed(geom, r)?;
    let mut out = String::from("mu");
    (0..r).for_each(|b| out.push_str(&format!(",c{b}")));
    out.push('\n');
    for (mu, row) in geom.class_values.iter().zip(&coords) {
        out.push_str(&fmt_num(*mu));
        row.iter().for_each(|v| out.push_str(&format!(",{}", fmt_num(*v))));
        out.push('\n');
    }
    Ok(out)
}

/// inPCA of `N(mu, sigma)` over `mus`, with its stress against the direct
/// Bhattacharyya matrix.
pub fn gaussian_arc(mus: &[f64], sigma: f64, k: usize) -> Result<(String, f64)> {
    let ps = mus.iter().map(|&m| discretized_normal(DistSpec::new(m, sigma)?)).collect::<Result<Vec<_>>>()?;
    let emb = inpca(&ps, k)?;
    let stress = inpca_stress(&emb, &ps);
    Ok((emb.to_csv(&[("mu", mus.to_vec())]), stress))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverCheck {
    /// `(t, closed mean, closed std, simulated mean, simulated std)`, the
    /// simulated moments averaged over seeds.
    pub rows: Vec<(usize, f64, f64, f64, f64)>,
}

impl ObserverCheck {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,closed_mean,closed_std,observer_mean,observer_std\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.0, fmt_num(r.1), fmt_num(r.2), fmt_num(r.3), fmt_num(r.4)));
        }
        out
    }

    pub fn at(&self, t: usize) -> Option<&(usize, f64, f64, f64, f64)> {
        self.rows.iter().find(|r| r.0 == t)
    }
}

/// Ideal-observer moments on a single switch `a -> b` at `len`, averaged over
/// `seeds`, next to the closed-form expectation. Row `t` has seen `t` values.
pub fn observer_check(
    a: DistSpec,
    b: DistSpec,
    len: usize,
    seeds: &[u64],
    prior: ObserverPrior,
) -> Result<ObserverCheck> {
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds"));
    }
    let total = 2 * len;
    let (mut sm, mut ss) = (vec![0.0; total], vec![0.0; total]);
    for &seed in seeds {
        let series = gen_series(&[Segment { dist: a, length: len }, Segment { dist: b, length: len }], seed)?;
        let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
        let (m, s) = observer_moments(&values, prior)?;
        sm.iter_mut().zip(&m).for_each(|(acc, v)| *acc += v / seeds.len() as f64);
        ss.iter_mut().zip(&s).for_each(|(acc, v)| *acc += v / seeds.len() as f64);
    }
    let rows = (1..=total)
        .map(|t| {
            let tf = t as f64;
            Ok((
                t,
                closed_form_mean(tf, a.mu, b.mu, len as f64)?,
                closed_form_std(tf, a.sigma, a.mu, b.mu, len as f64)?,
                sm[t - 1],
                ss[t - 1],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObserverCheck { rows })
}
