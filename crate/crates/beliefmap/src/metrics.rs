//! Measurements in distribution space. All logs are natural, so entropies and
//! divergences are in nats.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataio::{DistSpec, ProbVec, NUM_TOKENS};
use crate::{Error, Result};

/// Temperature softmax over the 1000 number-token logits with max-subtraction.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Result<ProbVec> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if logits.len() != NUM_TOKENS {
        return Err(Error::invalid(format!("expected {NUM_TOKENS} logits, got {}", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numeric("non-finite logits"));
    }
    let w: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    ProbVec::new(w)
}

/// Mass of each bin k = 0..=999 under N(mu, sigma) discretized by rounding,
/// with bins 0 and 999 absorbing the two tails.
pub fn discretized_normal(spec: DistSpec) -> Result<ProbVec> {
    spec.validate()?;
    let n = Normal::new(spec.mu, spec.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(bin_by_cdf(|x| n.cdf(x)))
}

/// Bins a continuous CDF onto the token grid: interior bins take
/// `F(k+0.5) - F(k-0.5)`, the edge bins take the tails.
pub(crate) fn bin_by_cdf(cdf: impl Fn(f64) -> f64) -> ProbVec {
    let edges: Vec<f64> = (0..NUM_TOKENS - 1).map(|k| cdf(k as f64 + 0.5)).collect();
    let mut p = Vec::with_capacity(NUM_TOKENS);
    p.push(edges[0]);
    for k in 1..NUM_TOKENS - 1 {
        p.push((edges[k] - edges[k - 1]).max(0.0));
    }
    p.push((1.0 - edges[NUM_TOKENS - 2]).max(0.0));
    ProbVec::new(p).expect("binned CDF has unit mass")
}

/// Result of a KL evaluation. `support_violation` is set, and `nats` is +inf,
/// when p puts mass where q has none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kl {
    pub nats: f64,
    pub support_violation: bool,
}

pub fn kl(p: &ProbVec, q: &ProbVec) -> Kl {
    let mut total = 0.0;
    for (&pk, &qk) in p.as_slice().iter().zip(q.as_slice()) {
        if pk > 0.0 {
            if qk <= 0.0 {
                return Kl { nats: f64::INFINITY, support_violation: true };
            }
            total += pk * (pk / qk).ln();
        }
    }
    Kl { nats: total.max(0.0), support_violation: false }
}

/// `2^{-1/2} * ||sqrt(p) - sqrt(q)||_2`, in [0, 1].
pub fn hellinger(p: &ProbVec, q: &ProbVec) -> f64 {
    let s: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(&a, &b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    (s / 2.0).sqrt().min(1.0)
}

pub fn entropy(p: &ProbVec) -> f64 {
    -p.as_slice().iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Mean and standard deviation over token values.
pub fn dist_mean_std(p: &ProbVec) -> (f64, f64) {
    let mean: f64 = p.as_slice().iter().enumerate().map(|(k, &x)| k as f64 * x).sum();
    let var: f64 = p.as_slice().iter().enumerate().map(|(k, &x)| (k as f64 - mean).powi(2) * x).sum();
    (mean, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTrajectory {
    pub probs: Vec<ProbVec>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub entropies: Vec<f64>,
}

impl BeliefTrajectory {
    pub fn from_probs(probs: Vec<ProbVec>) -> Self {
        let (means, stds) = probs.iter().map(dist_mean_std).unzip();
        let entropies = probs.iter().map(entropy).collect();
        BeliefTrajectory { probs, means, stds, entropies }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// CSV with columns t, mean, std, entropy, kl_to_ref, hellinger_to_prev.
    /// The first row has an empty hellinger_to_prev; infinite KL is written as `inf`.
    pub fn to_csv(&self, reference: &ProbVec) -> String {
        let mut out = String::from("t,mean,std,entropy,kl_to_ref,hellinger_to_prev\n");
        for t in 0..self.len() {
            let k = kl(&self.probs[t], reference);
            let kl_s = if k.support_violation { "inf".to_string() } else { fmt_num(k.nats) };
            let h = if t == 0 { String::new() } else { fmt_num(hellinger(&self.probs[t], &self.probs[t - 1])) };
            out.push_str(&format!(
                "{t},{},{},{},{kl_s},{h}\n",
                fmt_num(self.means[t]),
                fmt_num(self.stds[t]),
                fmt_num(self.entropies[t])
            ));
        }
        out
    }
}

/// Fixed-precision number formatting used by every CSV writer.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.10}");
        if s == "-0.0000000000" {
            "0.0000000000".to_string()
        } else {
            s
        }
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equilibration {
    /// Tokens after `from_t` until the moments stay within tolerance.
    After(usize),
    Never,
}

/// Smallest `dt` such that every step from `from_t + dt` to the end of the
/// trajectory has its mean and std within tolerance of `target`.
pub fn equilibration_time(
    traj: &BeliefTrajectory,
    target: DistSpec,
    tol_mean: f64,
    tol_std: f64,
    from_t: usize,
) -> Result<Equilibration> {
    equilibration_from_moments(&traj.means, &traj.stds, target, tol_mean, tol_std, from_t)
}

/// [`equilibration_time`] on bare moment sequences.
pub fn equilibration_from_moments(
    means: &[f64],
    stds: &[f64],
    target: DistSpec,
    tol_mean: f64,
    tol_std: f64,
    from_t: usize,
) -> Result<Equilibration> {
    if means.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if means.len() != stds.len() {
        return Err(Error::invalid("means and stds differ in length"));
    }
    if from_t >= means.len() {
        return Err(Error::invalid(format!("from_t {from_t} beyond trajectory length {}", means.len())));
    }
    let within = |t: usize| (means[t] - target.mu).abs() <= tol_mean && (stds[t] - target.sigma).abs() <= tol_std;
    // Walk backwards to find the start of the final in-tolerance run.
    let mut start = means.len();
    while start > from_t && within(start - 1) {
        start -= 1;
    }
    if start == means.len() {
        Ok(Equilibration::Never)
    } else {
        Ok(Equilibration::After(start - from_t))
    }
}
