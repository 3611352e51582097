//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line
//! each (with the individual checks underneath), and exits non-zero if any
//! criterion fails.

use std::time::{Duration, Instant};

use beliefmap::cli::{reproduce, run, EXPERIMENTS};
use beliefmap::dataio::{DistSpec, ProbVec};
use beliefmap::embedding::inpca;
use beliefmap::experiments::{
    field_geometry, field_steering, gaussian_arc, lfp_suite, mixture_experiment, observer_check, primal_steering, Lab,
};
use beliefmap::geometry::{cumvar, field_embed, FieldGeometry};
use beliefmap::metrics::{discretized_normal, entropy, hellinger, kl};
use beliefmap::observer::{closed_form_mean, closed_form_std, ObserverPrior};
use beliefmap::probes::cosine_gram;
use beliefmap::synth::SynthConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Individual checks of one criterion: `(description, passed)`.
type Checks = Vec<(String, bool)>;
/// Name, runner and runtime limit in seconds.
type Criterion = (&'static str, fn() -> Checks, Option<u64>);

fn check(checks: &mut Checks, ok: bool, what: String) {
    checks.push((what, ok));
}

fn sig4(x: f64) -> f64 {
    let mag = 10f64.powi(3 - x.abs().log10().floor() as i32);
    (x * mag).round() / mag
}

fn observer() -> Checks {
    let mut c = Checks::new();
    let hand = [(1000.0, 300.0, 100.0), (1250.0, 380.0, 188.7), (2000.0, 500.0, 223.6)];
    for (t, m, s) in hand {
        let cm = closed_form_mean(t, 300.0, 700.0, 1000.0).unwrap();
        let cs = closed_form_std(t, 100.0, 300.0, 700.0, 1000.0).unwrap();
        check(
            &mut c,
            sig4(cm) == m && sig4(cs) == s,
            format!("closed form t={t}: mean {cm:.4} (hand {m}), std {cs:.4} (hand {s})"),
        );
    }
    let a = DistSpec::new(300.0, 100.0).unwrap();
    let b = DistSpec::new(700.0, 100.0).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let oc = observer_check(a, b, 1000, &seeds, ObserverPrior::default()).unwrap();
    for t in [1100, 1500, 2000] {
        let &(_, cm, cs, om, os) = oc.at(t).unwrap();
        let (em, es) = ((om - cm).abs() / cm, (os - cs).abs() / cs);
        check(
            &mut c,
            em <= 0.03 && es <= 0.03,
            format!(
                "simulated t={t}: mean {om:.2} vs {cm:.2} ({:.2}%), std {os:.2} vs {cs:.2} ({:.2}%)",
                100.0 * em,
                100.0 * es
            ),
        );
    }
    c
}

fn metrics() -> Checks {
    let mut c = Checks::new();
    let n = discretized_normal(DistSpec::new(500.0, 100.0).unwrap()).unwrap();
    let u = ProbVec::uniform();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = ProbVec::new((0..1000).map(|_| rng.random::<f64>()).collect()).unwrap();
    check(&mut c, kl(&n, &n).nats == 0.0 && kl(&r, &r).nats == 0.0, "kl(p, p) = 0".into());
    check(&mut c, hellinger(&n, &n) == 0.0 && hellinger(&r, &r) == 0.0, "hellinger(p, p) = 0".into());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut max_h: f64 = 0.0;
    for _ in 0..50 {
        let p = ProbVec::new((0..1000).map(|_| rng.random::<f64>().powi(8)).collect()).unwrap();
        let q = ProbVec::new((0..1000).map(|_| rng.random::<f64>().powi(8)).collect()).unwrap();
        max_h = max_h.max(hellinger(&p, &q));
    }
    let disjoint = hellinger(&ProbVec::point_mass(3).unwrap(), &ProbVec::point_mass(900).unwrap());
    check(
        &mut c,
        max_h <= 1.0 && disjoint <= 1.0 + 1e-15,
        format!("hellinger <= 1 (random max {max_h:.4}, disjoint {disjoint})"),
    );
    let hu = entropy(&u);
    check(
        &mut c,
        (hu - 1000f64.ln()).abs() < 1e-12,
        format!("entropy(uniform) = {hu:.12}, ln 1000 = {:.12}", 1000f64.ln()),
    );
    let hn = entropy(&n);
    check(&mut c, (hn - 6.024).abs() <= 0.01, format!("entropy N(500,100) = {hn:.4}"));
    let ku = kl(&n, &u).nats;
    check(&mut c, (ku - 0.884).abs() <= 0.01, format!("KL(N(500,100) || uniform) = {ku:.4}"));
    c
}

fn lfp() -> Checks {
    let mut c = Checks::new();
    let lab = Lab::new(&SynthConfig::default()).unwrap();
    let shifts = [0.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0];
    let r = lfp_suite(&lab, (300.0, 350.0), &shifts).unwrap();
    check(&mut c, r.accuracy >= 0.95, format!("multiclass held-out accuracy {:.4} ({} epochs)", r.accuracy, r.epochs));
    check(&mut c, r.gram_diag_max_dev < 1e-12, format!("Gram diagonal max deviation {:.1e}", r.gram_diag_max_dev));
    let worst = r.leave_one_out.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    check(
        &mut c,
        worst >= 0.8 && worst > r.noise_floor,
        format!(
            "leave-one-out cosine min {worst:.4} over {} classes (noise floor {:.4})",
            r.leave_one_out.len(),
            r.noise_floor
        ),
    );
    let accs: Vec<f64> = r.transfer.iter().map(|p| p.accuracy).collect();
    let monotone = accs.windows(2).all(|w| w[1] <= w[0] + 0.03);
    let last = *accs.last().unwrap();
    check(
        &mut c,
        monotone && last <= 0.6,
        format!(
            "transfer accuracies {:?} non-increasing (slack 0.03), last {last:.3}",
            accs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    );
    check(&mut c, (r.random_probe - 0.5).abs() <= 0.05, format!("untrained probe accuracy {:.4}", r.random_probe));
    c
}

fn geometry() -> Checks {
    let mut c = Checks::new();
    let lab = Lab::new(&SynthConfig::default()).unwrap();
    let (_, geom) = field_geometry(&lab).unwrap();
    let r = geom.positive_modes();
    let e = field_embed(&geom, r).unwrap();
    let n = geom.k.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d: f64 = e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum();
            err = err.max((d - geom.k[(i, j)]).abs());
        }
    }
    check(
        &mut c,
        err <= 1e-8 && geom.negative_modes() == 0,
        format!("trained field: PSD, reconstruction error {err:.1e} with {r} modes"),
    );
    let cv: Vec<f64> = (1..=n).map(|k| cumvar(&geom.eigenvalues, k).unwrap()).collect();
    check(
        &mut c,
        cv.windows(2).all(|w| w[1] >= w[0]) && (cv[n - 1] - 1.0).abs() < 1e-12,
        format!("cumvar monotone, r=1..3: {:.4} {:.4} {:.4}", cv[0], cv[1], cv[2]),
    );
    let mus: Vec<f64> = (0..9).map(|i| 300.0 + 50.0 * i as f64).collect();
    let rows: Vec<Vec<f64>> = mus
        .iter()
        .map(|m| {
            let th = (m - 300.0) / 160.0;
            let mut v = vec![0.0; 32];
            v[3] = th.cos();
            v[17] = th.sin();
            v
        })
        .collect();
    let g2 = FieldGeometry::new(cosine_gram(&rows).unwrap(), mus).unwrap();
    check(&mut c, g2.positive_modes() == 2, format!("rank-2 synthetic field: {} positive modes", g2.positive_modes()));
    c
}

fn steering() -> Checks {
    let mut c = Checks::new();
    let lab = Lab::new(&SynthConfig::default()).unwrap();
    let p = primal_steering(&lab, 300.0, 700.0, 500.0, 20).unwrap();
    let (lm, ls, lo) = p.linear_end();
    let (sm, ss, so) = p.spline_end();
    check(
        &mut c,
        (lm - 500.0).abs() <= 5.0 && (sm - 500.0).abs() <= 5.0,
        format!("matched means: linear {lm:.2} (alpha {:.4}), spline {sm:.2} (mu_to {:.2})", p.alpha, p.spline_mu_to),
    );
    check(
        &mut c,
        lo >= 3.0 * so,
        format!("off-manifold: linear |{ls:.2} - 100| = {lo:.2} >= 3 x spline |{ss:.2} - 100| = {so:.3}"),
    );
    let f = field_steering(&lab, 300.0, 500.0, 700.0, 2, 20).unwrap();
    match &f.field {
        Ok((gain, rep)) => {
            let worst = rep.max_off_manifold() / 100.0;
            check(
                &mut c,
                worst <= 0.1,
                format!("field sweep 300->500 (gain {gain:.3}): max |std - 100|/100 = {worst:.3}"),
            );
        }
        Err(e) => {
            let u = &f.unit_gain.rows;
            let (first, last) = (&u[0], &u[u.len() - 1]);
            let rising = u.windows(2).all(|w| w[1].mean >= w[0].mean);
            check(&mut c, false, format!("field sweep 300->500: gain calibration failed: {e}"));
            check(
                &mut c,
                rising && f.unit_gain.max_off_manifold() <= 10.0,
                format!(
                    "field sweep at unit gain: mean {:.1} -> {:.1} (monotone increase: {rising}), max |std - 100| = {:.2}",
                    first.mean,
                    last.mean,
                    f.unit_gain.max_off_manifold()
                ),
            );
        }
    }
    let first_bad = f.probe.rows.iter().find(|r| r.off_manifold / 100.0 > 0.1);
    check(
        &mut c,
        first_bad.is_some(),
        match first_bad {
            Some(r) => {
                format!("probe_dir sweep violates 10% at alpha {:.3} (mean {:.1}, std {:.1})", r.param, r.mean, r.std)
            }
            None => "probe_dir sweep never leaves the 10% band".into(),
        },
    );
    c
}

fn mixture() -> Checks {
    let mut c = Checks::new();
    let add = mixture_experiment(&SynthConfig::mixture(0.0), (500.0, 110.0)).unwrap();
    check(
        &mut c,
        add.rms_error <= add.noise_floor,
        format!("additive: rms error {:.4} <= noise floor {:.4}", add.rms_error, add.noise_floor),
    );
    let cross = mixture_experiment(&SynthConfig::mixture(SynthConfig::MIXTURE_CROSS_TERM), (500.0, 110.0)).unwrap();
    check(
        &mut c,
        cross.rms_error >= 5.0 * cross.noise_floor,
        format!("cross term {}: rms error {:.4} >= 5 x {:.4}", cross.cross_term, cross.rms_error, cross.noise_floor),
    );
    c
}

fn inpca_checks() -> Checks {
    let mut c = Checks::new();
    let p = discretized_normal(DistSpec::new(420.0, 60.0).unwrap()).unwrap();
    let e = inpca(&vec![p; 5], 2).unwrap();
    let spread = e.coords.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    check(&mut c, spread < 1e-12, format!("identical inputs: max |coordinate| {spread:.1e}"));
    let mus: Vec<f64> = (0..9).map(|i| 300.0 + 50.0 * i as f64).collect();
    let (_, stress) = gaussian_arc(&mus, 100.0, 2).unwrap();
    check(&mut c, stress < 0.1, format!("Gaussian arc stress {stress:.4}"));
    c
}

fn determinism() -> Checks {
    let mut c = Checks::new();
    let cfg = SynthConfig::default();
    for id in EXPERIMENTS {
        let a = reproduce(id, &cfg).unwrap();
        let b = reproduce(id, &cfg).unwrap();
        check(&mut c, a == b, format!("{id}: {} files identical", a.len()));
    }
    let dir = tempfile::tempdir().unwrap();
    let cli = |out: &str| {
        let out = dir.path().join(out);
        run(["beliefmap", "reproduce", "fig6", "--out", out.to_str().unwrap()].map(String::from)) == 0
    };
    let ok = cli("a") && cli("b");
    let same = ["steer_probe.csv", "summary.json", "manifest.json"]
        .iter()
        .all(|f| std::fs::read(dir.path().join("a").join(f)).ok() == std::fs::read(dir.path().join("b").join(f)).ok());
    check(&mut c, ok && same, "CLI bundle fig6_field_steer byte-identical across runs".into());
    c
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("observer closed forms", observer, Some(10)),
        ("metrics identities", metrics, Some(1)),
        ("LFP suite", lfp, Some(60)),
        ("field geometry", geometry, Some(5)),
        ("steering separation", steering, Some(60)),
        ("mixture of manifolds", mixture, Some(30)),
        ("inPCA", inpca_checks, Some(10)),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let mut checks = run();
        let took = start.elapsed();
        if let Some(limit) = limit {
            check(
                &mut checks,
                took <= Duration::from_secs(limit),
                format!("runtime {:.2}s (limit {limit}s)", took.as_secs_f64()),
            );
        }
        let ok = checks.iter().all(|c| c.1);
        failed += usize::from(!ok);
        println!("{} {name} ({:.2}s)", if ok { "PASS" } else { "FAIL" }, took.as_secs_f64());
        for (what, pass) in &checks {
            println!("    [{}] {what}", if *pass { "ok" } else { "x" });
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
