use berm_core::metrics::mardia;
use berm_core::simgen::{build_covariance, fit_transform, generate_nonnormal, CovarianceSpec};
use nalgebra::DMatrix;

const SKEW: f64 = 5000.0;
const KURT: f64 = 25000.0;

fn moderate_sigma() -> DMatrix<f64> {
    build_covariance(&CovarianceSpec::moderate(), 11).unwrap()
}

#[test]
fn moderate_targets_are_reached_at_large_n() {
    let sigma = moderate_sigma();
    for seed in [101, 202, 303] {
        let x = generate_nonnormal(20_000, &sigma, SKEW, KURT, seed).unwrap();
        let (s, k) = mardia(&x).unwrap();
        println!("seed {seed}: skewness {s:.0}, kurtosis {k:.0}");
        assert!((s / SKEW - 1.0).abs() < 0.25, "skewness {s}");
        assert!((k / KURT - 1.0).abs() < 0.25, "kurtosis {k}");
    }
}

#[test]
fn calibrated_transform_for_moderate_targets() {
    let t = fit_transform(60, SKEW, KURT).unwrap();
    assert!(t.calibrated);
    assert!(t.spike_probability > 0.0 && t.scale_dispersion > 0.0);
}

#[test]
fn sample_covariance_tracks_sigma() {
    let sigma = moderate_sigma();
    let x = generate_nonnormal(50_000, &sigma, SKEW, KURT, 5).unwrap();
    let cov = x.tr_mul(&x) / 50_000.0;
    assert!((cov - &sigma).norm() < 0.05 * sigma.norm());
}

#[test]
fn skewed_targets_raise_sample_skewness() {
    let sigma = moderate_sigma();
    let p = 60.0;
    let mut wins = 0;
    for seed in 0..20u64 {
        let skewed = mardia(&generate_nonnormal(5_000, &sigma, SKEW, KURT, seed).unwrap()).unwrap().0;
        let normal = mardia(&generate_nonnormal(5_000, &sigma, 0.0, p * (p + 2.0), seed).unwrap()).unwrap().0;
        if skewed > normal {
            wins += 1;
        }
    }
    assert!(wins >= 19, "{wins}/20");
}

#[test]
fn normal_targets_give_normal_statistics() {
    let p = 8usize;
    let sigma = DMatrix::identity(p, p);
    let x = generate_nonnormal(20_000, &sigma, 0.0, (p * (p + 2)) as f64, 3).unwrap();
    let (s, k) = mardia(&x).unwrap();
    assert!(s < 0.1, "skewness {s}");
    assert!((k / 80.0 - 1.0).abs() < 0.03, "kurtosis {k}");
}
