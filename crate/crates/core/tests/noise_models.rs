use esi_core::forward::fibonacci_sensors;
use esi_core::simulate::{
    gaussian_kernel_covariance, gaussian_noise, mix_at_snr, normalize_covariance, CovarianceFactor,
    CovarianceNormalization,
};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn empirical_covariance(f: &CovarianceFactor<f64>, samples: u64) -> DMatrix<f64> {
    let m = f.dim();
    let mut acc = DMatrix::zeros(m, m);
    for s in 0..samples {
        let x = f.sample(s);
        acc.ger(1.0, &x, &x, 1.0);
    }
    acc / samples as f64
}

#[test]
fn realistic_noise_matches_normalised_target() {
    let sensors: Vec<Vector3<f64>> = fibonacci_sensors(16, &Vector3::zeros(), 95.0, true)
        .into_iter()
        .map(|s| s.position)
        .collect();
    let kernel = gaussian_kernel_covariance(&sensors, 40.0);
    // Unequal variances so that each normalisation actually changes the target.
    let d = DMatrix::from_diagonal(&DVector::from_fn(16, |i, _| 1.0 + 0.25 * i as f64));
    let cov = &d * kernel * &d;
    for norm in [
        CovarianceNormalization::Correlation,
        CovarianceNormalization::TraceOne,
        CovarianceNormalization::None,
    ] {
        let target = normalize_covariance(&cov, norm).unwrap();
        let f = CovarianceFactor::new(&cov, norm).unwrap();
        let emp = empirical_covariance(&f, 100_000);
        let rel = (&emp - &target).norm() / target.norm();
        assert!(rel < 0.05, "{norm:?}: relative Frobenius error {rel}");
    }
}

#[test]
fn achieved_snr_is_exact_across_the_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000u64 {
        let m = rng.random_range(4..128);
        let snr = rng.random_range(-20.0..=20.0);
        let clean = gaussian_noise::<f64>(m, case) * rng.random_range(1e-6..1e3);
        let noise = gaussian_noise::<f64>(m, case + 1_000_000) * rng.random_range(1e-6..1e3);
        let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
        assert!((mixed.achieved_snr_db - snr).abs() < 1e-6, "case {case}");
        let added = &mixed.noisy - &clean;
        let recomputed = 10.0 * (clean.norm_squared() / added.norm_squared()).log10();
        assert!(
            (recomputed - snr).abs() < 1e-6,
            "case {case}: {recomputed} vs {snr}"
        );
    }
}
