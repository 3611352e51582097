use approx::assert_abs_diff_eq;
use beliefmap::dataio::{DistSpec, ProbVec};
use beliefmap::embedding::*;
use beliefmap::metrics::discretized_normal;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn normal(mu: f64, sigma: f64) -> ProbVec {
    discretized_normal(DistSpec::new(mu, sigma).unwrap()).unwrap()
}

#[test]
fn collinear_points_have_one_component() {
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
    let e = pca(&x, 2).unwrap();
    assert_abs_diff_eq!(e.explained[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e.explained[1], 0.0, epsilon = 1e-12);
}

#[test]
fn pca_is_translation_invariant() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 * 0.1]).collect();
    let shifted: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v + 42.0).collect()).collect();
    let (a, b) = (pca(&x, 3).unwrap(), pca(&shifted, 3).unwrap());
    for (ra, rb) in a.coords.iter().zip(&b.coords) {
        for (u, v) in ra.iter().zip(rb) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-9);
        }
    }
}

#[test]
fn pca_anisotropic_cloud() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<Vec<f64>> = (0..10_000).map(|_| vec![2.0 * g.sample(&mut rng), g.sample(&mut rng)]).collect();
    let e = pca(&x, 2).unwrap();
    assert!((e.explained[0] - 0.8).abs() <= 0.05);
    assert!((e.explained[1] - 0.2).abs() <= 0.05);
    let c = e.components.unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    assert_abs_diff_eq!(dot(&c[0], &c[0]), 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(dot(&c[0], &c[1]), 0.0, epsilon = 1e-9);
}

#[test]
fn pca_rejects_bad_shapes() {
    assert!(pca(&[vec![1.0, 2.0]], 1).is_err());
    assert!(pca(&[vec![1.0, 2.0], vec![3.0, 4.0]], 3).is_err());
}

#[test]
fn identical_distributions_embed_at_a_point() {
    let ps = vec![normal(400.0, 50.0); 4];
    let e = inpca(&ps, 2).unwrap();
    assert!(e.coords.iter().flatten().all(|v| v.abs() < 1e-12));
    let dm = divergence_matrix(&ps);
    assert!((0..4).all(|i| dm[(i, i)] == 0.0));
}

#[test]
fn bhattacharyya_matches_direct_sum() {
    let (p, q) = (normal(500.0, 100.0), normal(560.0, 80.0));
    let direct = -p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a * b).sqrt()).sum::<f64>().ln();
    assert_abs_diff_eq!(bhattacharyya(&p, &q), direct, epsilon = 1e-14);
    assert_eq!(bhattacharyya(&p, &p), 0.0);
    assert!(inpca(&[ProbVec::point_mass(0).unwrap(), ProbVec::point_mass(1).unwrap()], 1).is_err());
    assert!(inpca(&[p], 1).is_err());
}

#[test]
fn gaussian_family_arc_has_low_stress() {
    let ps: Vec<ProbVec> = (0..9).map(|i| normal(300.0 + 50.0 * i as f64, 100.0)).collect();
    let e = inpca(&ps, 2).unwrap();
    assert!(inpca_stress(&e, &ps) < 0.1);
    // Ends of the family sit at the extremes of the first axis, the middle near its centre.
    let first: Vec<f64> = e.coords.iter().map(|c| c[0]).collect();
    assert!(first.windows(2).all(|w| (w[1] - w[0]).signum() == (first[8] - first[0]).signum()));
    assert!(e.axis_weights[0].abs() >= e.axis_weights[1].abs());
}

#[test]
fn positive_spectrum_reduces_to_classical_mds() {
    // Squared Euclidean distances of points in the plane give a PSD W.
    let pts: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0), (3.0, 1.0), (-1.0, 1.5)];
    let n = pts.len();
    let dm = DMatrix::from_fn(n, n, |i, j| (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2));
    let w = double_center(&dm);
    let (vals, vecs) = {
        let e = w.clone().symmetric_eigen();
        (e.eigenvalues, e.eigenvectors)
    };
    let recon = DMatrix::from_fn(n, n, |i, j| {
        (0..n).filter(|&b| vals[b] > 1e-12).map(|b| vals[b] * vecs[(i, b)] * vecs[(j, b)]).sum()
    });
    assert!((recon - &w).abs().max() < 1e-8);
    let gram_of_points = {
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
        DMatrix::from_fn(n, n, |i, j| (pts[i].0 - cx) * (pts[j].0 - cx) + (pts[i].1 - cy) * (pts[j].1 - cy))
    };
    assert!((w - gram_of_points).abs().max() < 1e-12);
}

#[test]
fn inpca_is_permutation_equivariant() {
    let ps: Vec<ProbVec> = [300.0, 420.0, 500.0, 650.0].iter().map(|&m| normal(m, 90.0)).collect();
    let perm = [2, 0, 3, 1];
    let qs: Vec<ProbVec> = perm.iter().map(|&i| ps[i].clone()).collect();
    let (a, b) = (inpca(&ps, 2).unwrap(), inpca(&qs, 2).unwrap());
    for (row, &i) in perm.iter().enumerate() {
        for ax in 0..2 {
            // Eigenvector signs are fixed by the largest entry, so compare magnitudes.
            assert_abs_diff_eq!(b.coords[row][ax].abs(), a.coords[i][ax].abs(), epsilon = 1e-9);
        }
    }
}

#[test]
fn csv_has_label_columns() {
    let ps: Vec<ProbVec> = [300.0, 500.0].iter().map(|&m| normal(m, 90.0)).collect();
    let csv = inpca(&ps, 1).unwrap().to_csv(&[("mu", vec![300.0, 500.0])]);
    assert_eq!(csv.lines().next().unwrap(), "mu,c0");
    assert_eq!(csv.lines().count(), 3);
}
