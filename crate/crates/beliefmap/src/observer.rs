//! Ideal Bayesian observer with a Normal-Inverse-Gamma prior over the mean and
//! variance of an i.i.d. Gaussian stream, and the closed-form expected
//! response to a single distribution switch.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataio::{DistSpec, ProbVec};
use crate::metrics::{bin_by_cdf, equilibration_from_moments, BeliefTrajectory, Equilibration};
use crate::{Error, Result};

/// `sigma^2 ~ InvGamma(alpha0, beta0)`, `mu | sigma^2 ~ N(mu0, sigma^2 / kappa0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverPrior {
    pub mu0: f64,
    pub kappa0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for ObserverPrior {
    /// Weak prior centred on the middle of the token range.
    fn default() -> Self {
        ObserverPrior { mu0: 500.0, kappa0: 1e-6, alpha0: 1e-3, beta0: 1e-3 }
    }
}

impl ObserverPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0.is_finite() && self.kappa0 > 0.0 && self.alpha0 > 0.0 && self.beta0 > 0.0;
        if !ok {
            return Err(Error::invalid("prior needs finite mu0 and positive kappa0, alpha0, beta0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveState {
    pub mu_n: f64,
    pub kappa_n: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
    pub n: u64,
}

impl PredictiveState {
    pub fn from_prior(p: ObserverPrior) -> Self {
        PredictiveState { mu_n: p.mu0, kappa_n: p.kappa0, alpha_n: p.alpha0, beta_n: p.beta0, n: 0 }
    }
}

/// One-observation conjugate update.
pub fn nig_update(s: PredictiveState, x: f64) -> PredictiveState {
    let kappa = s.kappa_n + 1.0;
    PredictiveState {
        mu_n: (s.kappa_n * s.mu_n + x) / kappa,
        kappa_n: kappa,
        alpha_n: s.alpha_n + 0.5,
        beta_n: s.beta_n + 0.5 * s.kappa_n * (x - s.mu_n).powi(2) / kappa,
        n: s.n + 1,
    }
}

/// Student-t posterior predictive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictive {
    pub location: f64,
    pub scale: f64,
    pub dof: f64,
    /// `None` when dof <= 2 and the variance is infinite.
    pub variance: Option<f64>,
}

impl Predictive {
    pub fn std(&self) -> Option<f64> {
        self.variance.map(f64::sqrt)
    }
}

pub fn predictive_params(s: &PredictiveState) -> Predictive {
    let scale = (s.beta_n * (s.kappa_n + 1.0) / (s.alpha_n * s.kappa_n)).sqrt();
    let dof = 2.0 * s.alpha_n;
    let variance = (dof > 2.0).then(|| scale * scale * dof / (dof - 2.0));
    Predictive { location: s.mu_n, scale, dof, variance }
}

fn switch_counts(t: f64, t_switch: f64) -> (f64, f64) {
    (t.min(t_switch), (t - t_switch).max(0.0))
}

/// Expected running mean `(m1 n1 + m2 n2) / t` for a switch at `t_switch`.
pub fn closed_form_mean(t: f64, m1: f64, m2: f64, t_switch: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::invalid("t must be at least 1"));
    }
    let (n1, n2) = switch_counts(t, t_switch);
    Ok((m1 * n1 + m2 * n2) / t)
}

/// Expected pooled standard deviation `sqrt(sigma^2 + (m2-m1)^2 n1 n2 / t^2)`.
pub fn closed_form_std(t: f64, sigma: f64, m1: f64, m2: f64, t_switch: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::invalid("t must be at least 1"));
    }
    let (n1, n2) = switch_counts(t, t_switch);
    Ok((sigma * sigma + (m2 - m1).powi(2) * n1 * n2 / (t * t)).sqrt())
}

/// Posterior states after each observation: entry `t` has seen values `0..=t`.
pub fn observer_states(values: &[f64], prior: ObserverPrior) -> Result<Vec<PredictiveState>> {
    prior.validate()?;
    if values.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    let mut s = PredictiveState::from_prior(prior);
    Ok(values
        .iter()
        .map(|&x| {
            s = nig_update(s, x);
            s
        })
        .collect())
}

/// Predictive location and std after each observation, without discretization.
/// Steps with infinite predictive variance report `f64::INFINITY`.
pub fn observer_moments(values: &[f64], prior: ObserverPrior) -> Result<(Vec<f64>, Vec<f64>)> {
    let states = observer_states(values, prior)?;
    Ok(states
        .iter()
        .map(|s| {
            let p = predictive_params(s);
            (p.location, p.std().unwrap_or(f64::INFINITY))
        })
        .unzip())
}

/// Student-t predictive binned onto the token grid with edge absorption.
pub fn discretized_predictive(s: &PredictiveState) -> Result<ProbVec> {
    let p = predictive_params(s);
    let t = StudentsT::new(p.location, p.scale, p.dof).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(bin_by_cdf(|x| t.cdf(x)))
}

/// Belief trajectory of the ideal observer over a series.
pub fn observer_trajectory(values: &[f64], prior: ObserverPrior) -> Result<BeliefTrajectory> {
    let states = observer_states(values, prior)?;
    let probs = states.iter().map(discretized_predictive).collect::<Result<Vec<_>>>()?;
    Ok(BeliefTrajectory::from_probs(probs))
}

/// Equilibration comparison between the ideal observer and another trajectory
/// after a switch to `target` at `from_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub observer: Option<usize>,
    pub other: Option<usize>,
    /// True when the other trajectory settles strictly earlier, or settles
    /// while the observer never does.
    pub other_faster: bool,
}

pub fn compare_equilibration(
    observer: (&[f64], &[f64]),
    other: (&[f64], &[f64]),
    target: DistSpec,
    tol_mean: f64,
    tol_std: f64,
    from_t: usize,
) -> Result<ComparisonReport> {
    let to_opt = |e: Equilibration| match e {
        Equilibration::After(dt) => Some(dt),
        Equilibration::Never => None,
    };
    let a = to_opt(equilibration_from_moments(observer.0, observer.1, target, tol_mean, tol_std, from_t)?);
    let b = to_opt(equilibration_from_moments(other.0, other.1, target, tol_mean, tol_std, from_t)?);
    let other_faster = match (a, b) {
        (Some(x), Some(y)) => y < x,
        (None, Some(_)) => true,
        _ => false,
    };
    Ok(ComparisonReport { observer: a, other: b, other_faster })
}
