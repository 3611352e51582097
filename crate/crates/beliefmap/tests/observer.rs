use approx::assert_abs_diff_eq;
use beliefmap::dataio::DistSpec;
use beliefmap::observer::*;
use beliefmap::seriesgen::{gen_series, Segment};

fn prior(mu0: f64, kappa0: f64, alpha0: f64, beta0: f64) -> ObserverPrior {
    ObserverPrior { mu0, kappa0, alpha0, beta0 }
}

#[test]
fn single_update_example() {
    let s = nig_update(PredictiveState::from_prior(prior(0.0, 1.0, 1.0, 1.0)), 0.0);
    assert_eq!((s.mu_n, s.kappa_n, s.alpha_n, s.beta_n, s.n), (0.0, 2.0, 1.5, 1.0, 1));
    let s = nig_update(PredictiveState::from_prior(prior(0.0, 1.0, 1.0, 1.0)), 2.0);
    assert_eq!((s.mu_n, s.beta_n), (1.0, 2.0));
}

#[test]
fn sequential_updates_match_batch_posterior() {
    let p = prior(480.0, 0.5, 2.0, 30.0);
    let xs: Vec<f64> = (0..57).map(|i| 400.0 + 37.0 * ((i * 7919) % 23) as f64 / 11.0).collect();
    let s = *observer_states(&xs, p).unwrap().last().unwrap();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let kappa = p.kappa0 + n;
    assert_abs_diff_eq!(s.kappa_n, kappa, epsilon = 1e-12);
    assert_abs_diff_eq!(s.mu_n, (p.kappa0 * p.mu0 + n * xbar) / kappa, epsilon = 1e-9);
    assert_abs_diff_eq!(s.alpha_n, p.alpha0 + n / 2.0, epsilon = 1e-12);
    let beta = p.beta0 + 0.5 * ss + p.kappa0 * n * (xbar - p.mu0).powi(2) / (2.0 * kappa);
    assert!((s.beta_n - beta).abs() / beta < 1e-10);
}

#[test]
fn predictive_converges_to_sample_moments() {
    let series = gen_series(&[Segment::new(400.0, 50.0, 20_000).unwrap()], 5).unwrap();
    let xs: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
    let (m, s) = observer_moments(&xs, ObserverPrior::default()).unwrap();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - xbar).powi(2)).sum::<f64>() / n).sqrt();
    assert!((m.last().unwrap() - xbar).abs() < 1e-3);
    assert!((s.last().unwrap() - sd).abs() < 0.01);
    assert!((sd - 50.0).abs() < 1.5);
}

#[test]
fn identical_values_pull_the_location_to_the_value() {
    let xs = vec![612.0; 1_000_000];
    let s = *observer_states(&xs, ObserverPrior { mu0: 0.0, ..ObserverPrior::default() }).unwrap().last().unwrap();
    assert!((s.mu_n - 612.0).abs() < 1e-6);
    let (m, _) = observer_moments(&[500.0; 50], ObserverPrior::default()).unwrap();
    assert!(m.iter().all(|&v| (v - 500.0).abs() < 1e-9));
    let sym: Vec<f64> = (1..=200).flat_map(|i| [i as f64, -(i as f64)]).collect();
    let (m, _) = observer_moments(&sym, ObserverPrior { mu0: 0.0, ..ObserverPrior::default() }).unwrap();
    assert!(m.last().unwrap().abs() < 1e-9);
}

#[test]
fn predictive_std_does_not_grow_after_burn_in() {
    // Compares the root of the seed-averaged predictive variance; the
    // average of the std itself rises early by Jensen's inequality.
    let seeds = 50;
    let mut avg = vec![0.0; 400];
    for seed in 0..seeds {
        let xs: Vec<f64> = gen_series(&[Segment::new(500.0, 60.0, 400).unwrap()], seed)
            .unwrap()
            .values
            .iter()
            .map(|&v| v as f64)
            .collect();
        let (_, s) = observer_moments(&xs, ObserverPrior::default()).unwrap();
        avg.iter_mut().zip(&s).for_each(|(a, v)| *a += v * v / seeds as f64);
    }
    let avg: Vec<f64> = avg.iter().map(|v| v.sqrt()).collect();
    for t in (20..400).step_by(20) {
        assert!(avg[t] <= avg[t - 20] * 1.01, "t={t}: {} after {}", avg[t], avg[t - 20]);
    }
}

#[test]
fn dof_two_has_infinite_variance() {
    // alpha0 = 0.5 reaches alpha 1 (dof 2) after one observation.
    let states = observer_states(&[500.0, 510.0], prior(500.0, 1.0, 0.5, 1.0)).unwrap();
    let p = predictive_params(&states[0]);
    assert_eq!(p.dof, 2.0);
    assert!(p.variance.is_none());
    let (_, s) = observer_moments(&[500.0], prior(500.0, 1.0, 0.5, 1.0)).unwrap();
    assert!(s[0].is_infinite());
    assert!(predictive_params(&states[1]).variance.is_some());
}

#[test]
fn predictive_variance_formula() {
    let s = PredictiveState { mu_n: 10.0, kappa_n: 3.0, alpha_n: 4.0, beta_n: 6.0, n: 3 };
    let p = predictive_params(&s);
    let scale2: f64 = 6.0 * 4.0 / (4.0 * 3.0);
    assert_abs_diff_eq!(p.scale, scale2.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(p.variance.unwrap(), scale2 * 8.0 / 6.0, epsilon = 1e-12);
}

#[test]
fn invalid_prior_and_empty_series() {
    assert!(observer_states(&[1.0], prior(0.0, 0.0, 1.0, 1.0)).is_err());
    assert!(observer_states(&[1.0], prior(f64::NAN, 1.0, 1.0, 1.0)).is_err());
    assert!(observer_states(&[], ObserverPrior::default()).is_err());
}

#[test]
fn closed_form_examples() {
    assert_eq!(closed_form_mean(50.0, 300.0, 500.0, 100.0).unwrap(), 300.0);
    assert_eq!(closed_form_mean(200.0, 300.0, 500.0, 100.0).unwrap(), 400.0);
    assert_eq!(closed_form_std(50.0, 30.0, 300.0, 500.0, 100.0).unwrap(), 30.0);
    // n1 = n2 = 100: sqrt(900 + 200^2 / 4)
    assert_abs_diff_eq!(closed_form_std(200.0, 30.0, 300.0, 500.0, 100.0).unwrap(), 10900f64.sqrt(), epsilon = 1e-9);
    assert!(closed_form_mean(0.5, 1.0, 2.0, 1.0).is_err());
    assert!(closed_form_std(f64::NAN, 1.0, 1.0, 2.0, 1.0).is_err());
}

#[test]
fn closed_form_std_peaks_at_twice_the_switch() {
    let ts = 150.0;
    let (best, _) = (1..=2000)
        .map(|t| (t, closed_form_std(t as f64, 20.0, 300.0, 500.0, ts).unwrap()))
        .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    assert_eq!(best, 300);
}

#[test]
fn discretized_predictive_and_trajectory() {
    let xs: Vec<f64> = (0..40).map(|i| 300.0 + (i % 7) as f64 * 10.0).collect();
    let traj = observer_trajectory(&xs, ObserverPrior::default()).unwrap();
    assert_eq!(traj.len(), 40);
    for p in &traj.probs {
        assert_abs_diff_eq!(p.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
    let (m, _) = observer_moments(&xs, ObserverPrior::default()).unwrap();
    assert!((traj.means[39] - m[39]).abs() < 0.5);
}

#[test]
fn averaged_observer_tracks_closed_form() {
    let segs = [Segment::new(300.0, 30.0, 200).unwrap(), Segment::new(500.0, 30.0, 200).unwrap()];
    let seeds = 20;
    let (mut mean, mut sd) = (vec![0.0; 400], vec![0.0; 400]);
    for seed in 0..seeds {
        let xs: Vec<f64> = gen_series(&segs, seed).unwrap().values.iter().map(|&v| v as f64).collect();
        let (m, s) = observer_moments(&xs, ObserverPrior::default()).unwrap();
        for t in 0..400 {
            mean[t] += m[t] / seeds as f64;
            sd[t] += s[t] / seeds as f64;
        }
    }
    for t in [100usize, 250, 300, 399] {
        let seen = (t + 1) as f64;
        let cm = closed_form_mean(seen, 300.0, 500.0, 200.0).unwrap();
        let cs = closed_form_std(seen, 30.0, 300.0, 500.0, 200.0).unwrap();
        assert!((mean[t] - cm).abs() / cm < 0.03, "t={t} mean {} vs {cm}", mean[t]);
        assert!((sd[t] - cs).abs() / cs < 0.05, "t={t} std {} vs {cs}", sd[t]);
    }
}

#[test]
fn comparison_ordering() {
    let target = DistSpec::new(500.0, 30.0).unwrap();
    let slow_m: Vec<f64> = (0..100).map(|t| if t < 80 { 400.0 } else { 500.0 }).collect();
    let fast_m: Vec<f64> = (0..100).map(|t| if t < 30 { 400.0 } else { 500.0 }).collect();
    let sd = vec![30.0; 100];
    let r = compare_equilibration((&slow_m, &sd), (&fast_m, &sd), target, 5.0, 5.0, 10).unwrap();
    assert_eq!((r.observer, r.other, r.other_faster), (Some(70), Some(20), true));
    let r = compare_equilibration((&fast_m, &sd), (&slow_m, &sd), target, 5.0, 5.0, 10).unwrap();
    assert!(!r.other_faster);
    let never = vec![400.0; 100];
    let r = compare_equilibration((&never, &sd), (&slow_m, &sd), target, 5.0, 5.0, 10).unwrap();
    assert_eq!((r.observer, r.other_faster), (None, true));
    let r = compare_equilibration((&slow_m, &sd), (&never, &sd), target, 5.0, 5.0, 10).unwrap();
    assert!(!r.other_faster);
}
