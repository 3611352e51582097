use beliefmap::dataio::{DistSpec, ProbVec};
use beliefmap::metrics::*;
use beliefmap::observer::{closed_form_mean, closed_form_std};
use proptest::prelude::*;

/// Bin masses by Simpson integration of the Gaussian density, edges by
/// complement. Shares no code with the CDF path under test.
fn oracle_normal(mu: f64, sigma: f64) -> Vec<f64> {
    let pdf = |x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let simpson = |a: f64, b: f64| {
        let n = 64 * ((b - a).abs().ceil() as usize).max(1);
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let mut p: Vec<f64> =
        (0..1000).map(|k| if k == 0 || k == 999 { 0.0 } else { simpson(k as f64 - 0.5, k as f64 + 0.5) }).collect();
    let left = simpson(mu - 12.0 * sigma, 0.5).max(0.0);
    let right = simpson(998.5, mu + 12.0 * sigma).max(0.0);
    p[0] = left;
    p[999] = right;
    p
}

fn normal(mu: f64, sigma: f64) -> ProbVec {
    discretized_normal(DistSpec::new(mu, sigma).unwrap()).unwrap()
}

fn moments(p: &[f64]) -> (f64, f64) {
    let m: f64 = p.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let v: f64 = p.iter().enumerate().map(|(k, x)| (k as f64 - m).powi(2) * x).sum();
    (m, v.sqrt())
}

#[test]
fn softmax_equal_logits_is_uniform() {
    let p = softmax_t(&[3.7; 1000], 1.0).unwrap();
    assert!(p.as_slice().iter().all(|&v| (v - 1e-3).abs() < 1e-15));
}

#[test]
fn softmax_high_temperature_flattens() {
    let mut l = vec![0.0; 1000];
    l[0] = 1.0;
    let p = softmax_t(&l, 1000.0).unwrap();
    let (lo, hi) = p.as_slice().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi - lo < 1e-3);
    assert!(softmax_t(&l, 0.0).is_err());
    assert!(softmax_t(&l, -1.0).is_err());
}

#[test]
fn softmax_inverts_log_mass() {
    let q = normal(420.0, 80.0);
    let logits: Vec<f64> = q.as_slice().iter().map(|v| v.ln()).collect();
    let p = softmax_t(&logits, 1.0).unwrap();
    for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn discretized_normal_matches_integration_oracle() {
    for (mu, sigma) in [(500.0, 100.0), (0.0, 1.0), (997.0, 3.0), (300.0, 20.0)] {
        let got = normal(mu, sigma);
        let want = oracle_normal(mu, sigma);
        let max_err = got.as_slice().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err < 1e-9, "N({mu},{sigma}): {max_err}");
    }
}

#[test]
fn discretized_normal_500_100() {
    let p = normal(500.0, 100.0);
    let (m, s) = dist_mean_std(&p);
    assert!((m - 500.0).abs() <= 0.01);
    assert!((s - 100.0).abs() <= 0.1);
    let oracle_h: f64 = oracle_normal(500.0, 100.0).iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
    assert!((entropy(&p) - oracle_h).abs() < 1e-8);
    assert!((entropy(&p) - 6.024).abs() <= 0.01);
}

#[test]
fn discretized_standard_normal_edge_bin() {
    let p = normal(0.0, 1.0);
    assert!((p.as_slice()[0] - 0.691).abs() < 1e-3);
}

#[test]
fn kl_identities() {
    let p = normal(500.0, 100.0);
    assert_eq!(kl(&p, &p).nats, 0.0);
    let to_uniform = kl(&p, &ProbVec::uniform());
    assert!(!to_uniform.support_violation);
    assert!(((1000f64).ln() - entropy(&p) - to_uniform.nats).abs() < 1e-12);
    assert!((to_uniform.nats - 0.884).abs() <= 0.01);
    let v = kl(&ProbVec::uniform(), &ProbVec::point_mass(3).unwrap());
    assert!(v.support_violation && v.nats.is_infinite());
}

#[test]
fn hellinger_identities() {
    let p = normal(500.0, 100.0);
    let q = normal(510.0, 100.0);
    assert_eq!(hellinger(&p, &p), 0.0);
    assert!((hellinger(&ProbVec::point_mass(1).unwrap(), &ProbVec::point_mass(2).unwrap()) - 1.0).abs() < 1e-15);
    let brute =
        (0.5 * p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>()).sqrt();
    let h = hellinger(&p, &q);
    assert!(h > 0.0 && h < 1.0);
    assert!((h - brute).abs() < 1e-12);
    assert_eq!(h, hellinger(&q, &p));
}

#[test]
fn entropy_and_moments_reference_values() {
    assert!((entropy(&ProbVec::uniform()) - (1000f64).ln()).abs() < 1e-12);
    let pm = ProbVec::point_mass(500).unwrap();
    assert_eq!(dist_mean_std(&pm), (500.0, 0.0));
    assert_eq!(entropy(&pm), 0.0);
    assert!((entropy(&normal(500.0, 20.0)) - 4.415).abs() <= 0.02);
}

#[test]
fn interior_normals_have_accurate_moments() {
    for mu in [300.0, 450.0, 700.0] {
        for sigma in [10.0, 60.0, 140.0] {
            if mu - 5.0 * sigma < 0.0 || mu + 5.0 * sigma > 999.0 {
                continue;
            }
            let p = normal(mu, sigma);
            let (m, s) = dist_mean_std(&p);
            let (om, os) = moments(p.as_slice());
            assert!((m - om).abs() < 1e-9 && (s - os).abs() < 1e-9);
            assert!((m - mu).abs() <= 0.05);
            assert!((s - sigma).abs() / sigma <= 0.01);
        }
    }
}

fn traj_of(specs: &[(f64, f64)]) -> BeliefTrajectory {
    BeliefTrajectory::from_probs(specs.iter().map(|&(m, s)| normal(m, s)).collect())
}

#[test]
fn equilibration_edge_cases() {
    let target = DistSpec::new(500.0, 100.0).unwrap();
    let at = traj_of(&[(500.0, 100.0); 5]);
    assert_eq!(equilibration_time(&at, target, 1.0, 1.0, 0).unwrap(), Equilibration::After(0));
    let never = traj_of(&[(300.0, 100.0); 5]);
    assert_eq!(equilibration_time(&never, target, 1.0, 1.0, 0).unwrap(), Equilibration::Never);
    // A single in-tolerance blip before leaving again does not count.
    let blip = traj_of(&[(300.0, 100.0), (500.0, 100.0), (300.0, 100.0), (500.0, 100.0), (500.0, 100.0)]);
    assert_eq!(equilibration_time(&blip, target, 1.0, 1.0, 0).unwrap(), Equilibration::After(3));
    assert!(equilibration_time(&at, target, 1.0, 1.0, 5).is_err());
    assert!(equilibration_from_moments(&[], &[], target, 1.0, 1.0, 0).is_err());
}

#[test]
fn equilibration_on_closed_form_curve_matches_scan() {
    // After a switch 300 -> 700 at 1000 the expected moments approach the new
    // regime only as 1/t; compare with a direct scan of the closed forms.
    let (m1, m2, ts) = (300.0, 700.0, 1000.0);
    let ts_n = 1000;
    let t_end = 40_000;
    let means: Vec<f64> = (1..=t_end).map(|t| closed_form_mean(t as f64, m1, m2, ts).unwrap()).collect();
    let stds: Vec<f64> = (1..=t_end).map(|t| closed_form_std(t as f64, 100.0, m1, m2, ts).unwrap()).collect();
    let target = DistSpec::new(700.0, 100.0).unwrap();
    let (tol_m, tol_s) = (20.0, 30.0);
    let got = equilibration_from_moments(&means, &stds, target, tol_m, tol_s, ts_n).unwrap();
    let ok = |i: usize| (means[i] - 700.0).abs() <= tol_m && (stds[i] - 100.0).abs() <= tol_s;
    let first_sustained = (ts_n..t_end).find(|&s| (s..t_end).all(ok)).unwrap();
    assert_eq!(got, Equilibration::After(first_sustained - ts_n));
    assert!(first_sustained > 2 * ts_n);
}

#[test]
fn trajectory_caches_match_recomputation_and_csv_shape() {
    let tr = traj_of(&[(300.0, 50.0), (350.0, 60.0), (400.0, 70.0)]);
    for (i, p) in tr.probs.iter().enumerate() {
        assert_eq!(dist_mean_std(p), (tr.means[i], tr.stds[i]));
        assert_eq!(entropy(p), tr.entropies[i]);
    }
    let csv = tr.to_csv(&normal(500.0, 100.0));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,mean,std,entropy,kl_to_ref,hellinger_to_prev");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with(','));
    assert_eq!(lines[2].split(',').count(), 6);
    let inf = BeliefTrajectory::from_probs(vec![ProbVec::uniform()]).to_csv(&ProbVec::point_mass(0).unwrap());
    assert!(inf.lines().nth(1).unwrap().contains(",inf,"));
}

#[test]
fn fmt_num_is_fixed_precision() {
    assert_eq!(fmt_num(0.5), "0.5000000000");
    assert_eq!(fmt_num(-0.0), "0.0000000000");
    assert_eq!(fmt_num(-1e-12), "0.0000000000");
    assert_eq!(fmt_num(f64::INFINITY), "inf");
    assert_eq!(fmt_num(f64::NAN), "nan");
}

fn arb_prob() -> impl Strategy<Value = ProbVec> {
    prop::collection::vec(0.0f64..1.0, 1000)
        .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 0.0)
        .prop_map(|w| ProbVec::new(w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_nonnegative(p in arb_prob(), q in arb_prob()) {
        let k = kl(&p, &q);
        prop_assume!(!k.support_violation);
        prop_assert!(k.nats >= -1e-12);
        prop_assert!(kl(&p, &p).nats.abs() < 1e-12);
    }

    #[test]
    fn hellinger_is_a_bounded_metric(p in arb_prob(), q in arb_prob(), r in arb_prob()) {
        let (pq, qr, pr) = (hellinger(&p, &q), hellinger(&q, &r), hellinger(&p, &r));
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!((pq - hellinger(&q, &p)).abs() < 1e-15);
        prop_assert!(pr <= pq + qr + 1e-12);
    }
}
