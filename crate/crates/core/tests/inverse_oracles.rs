use esi_core::basis::{gbf_basis, BasisSet};
use esi_core::forward::{ForwardModel, Sensor};
use esi_core::inverse::{
    build_prior, eloreta_weights, prior_from_weights, solve_dspm, solve_map, solve_mne,
    solve_sloreta, MapProblem, MneProblem, PriorSpec,
};
use esi_core::metrics::{peak_index, shape_error_values};
use esi_core::phantom::SphericalPhantom;
use esi_core::simulate::patch_source;
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wrap(k: DMatrix<f64>) -> ForwardModel<f64> {
    let sensors = (0..k.nrows())
        .map(|i| Sensor {
            name: format!("s{i}"),
            position: Vector3::new(0.0, 0.0, i as f64),
        })
        .collect();
    ForwardModel::new(k, sensors, Vec::new()).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn unit_prior(n: usize) -> PriorSpec<f64> {
    PriorSpec {
        sigma_diag: DVector::from_element(n, 1.0),
        epsilon_frac: 0.0,
        lambda_bar: 1.0,
    }
}

#[test]
fn noiseless_in_span_recovery() {
    let (mesh, fm) = SphericalPhantom::default().build::<f64>().unwrap();
    let basis = gbf_basis(&mesh, 50, true).unwrap();
    let patch = patch_source(&mesh, 17, 30.0, 1.0).unwrap();
    // Least-squares projection of the patch onto span(A), so the truth is
    // exactly representable.
    let a = basis.functions();
    let theta_true = a
        .clone()
        .svd(true, true)
        .solve(patch.values(), 1e-14)
        .unwrap();
    let x_true = a * &theta_true;
    let y = fm.leadfield() * &x_true;
    let prior = build_prior(&basis, 0.1).unwrap();
    let problem = MapProblem::new(&fm, &basis, &prior, None).unwrap();
    let sol = problem.solve(&y, 1e-10 * problem.scale()).unwrap();
    let err = (sol.source.values() - &x_true).norm() / x_true.norm();
    assert!(err < 1e-4, "relative error {err:e}");
    let se = shape_error_values(sol.source.values(), &x_true).unwrap();
    assert!(se < 0.01, "SE {se}");
}

#[test]
fn map_with_identity_basis_is_mne() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let basis = BasisSet::identity(20).unwrap();
    for _ in 0..50 {
        let fm = wrap(random_matrix(&mut rng, 8, 20));
        let y = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let beta = 10f64.powf(rng.random_range(-3.0..1.0));
        let map = solve_map(&y, &fm, &basis, &unit_prior(20), beta).unwrap();
        let mne = solve_mne(&y, &fm, None, beta).unwrap();
        let diff = (map.source.values() - mne.source.values()).norm() / mne.source.values().norm();
        assert!(diff < 1e-9, "relative difference {diff:e} at β = {beta}");
    }
}

#[test]
fn sloreta_localises_every_vertex() {
    let (mesh, fm) = SphericalPhantom::with_subdivisions(2)
        .build::<f64>()
        .unwrap();
    let p = MneProblem::new(fm.leadfield(), None).unwrap();
    let beta = 1e-8 * p.scale();
    for j in 0..mesh.n_vertices() {
        let y = fm.leadfield().column(j).into_owned();
        let sol = p.sloreta(&y, beta).unwrap();
        assert_eq!(peak_index(sol.source.values()), j, "vertex {j}");
    }
}

#[test]
fn dspm_peak_near_mne_peak() {
    let (mesh, fm) = SphericalPhantom::with_subdivisions(2)
        .build::<f64>()
        .unwrap();
    let p = MneProblem::new(fm.leadfield(), None).unwrap();
    let beta = 1e-2 * p.scale();
    for j in [0, 40, 100, 161] {
        let y = fm.leadfield().column(j).into_owned();
        let a = peak_index(p.mne(&y, beta).unwrap().source.values());
        let b = peak_index(p.dspm(&y, beta).unwrap().source.values());
        let near = a == b || mesh.neighbors(a).iter().any(|&(v, _)| v == b);
        assert!(near, "vertex {j}: MNE peak {a}, dSPM peak {b}");
    }
}

#[test]
fn eloreta_converges_on_fixture() {
    let (_, fm) = SphericalPhantom::with_subdivisions(2)
        .build::<f64>()
        .unwrap();
    let scale = MneProblem::new(fm.leadfield(), None).unwrap().scale();
    let w = eloreta_weights(fm.leadfield(), None, 0.01 * scale, 1e-8, 100).unwrap();
    assert!(w.iterations <= 100);
    assert!(w.last_change < 1e-8);
}

#[test]
fn linear_baselines_vanish_on_zero_data() {
    let (_, fm) = SphericalPhantom::with_subdivisions(1)
        .build::<f64>()
        .unwrap();
    let y = DVector::zeros(fm.n_sensors());
    for sol in [
        solve_mne(&y, &fm, None, 1.0).unwrap(),
        solve_dspm(&y, &fm, None, 1.0).unwrap(),
        solve_sloreta(&y, &fm, None, 1.0).unwrap(),
    ] {
        assert!(sol.source.values().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn single_precision_tracks_double_precision() {
    fn run<T: esi_core::Real>() -> (DVector<f64>, DVector<f64>) {
        let (mesh, fm) = SphericalPhantom::with_subdivisions(2).build::<T>().unwrap();
        let basis = gbf_basis(&mesh, 25, true).unwrap();
        let prior = build_prior(&basis, T::lit(0.1)).unwrap();
        // 25 modes are exactly the degrees l ≤ 4, so span(A) does not depend
        // on how either precision resolves the degenerate eigenspaces.
        let patch = patch_source(&mesh, 7, T::lit(40.0), T::one()).unwrap();
        let a = basis.functions();
        let x = a * a
            .clone()
            .svd(true, true)
            .solve(patch.values(), T::lit(1e-6))
            .unwrap();
        let y = fm.leadfield() * &x;
        let problem = MapProblem::new(&fm, &basis, &prior, None).unwrap();
        let sol = problem.solve(&y, T::lit(1e-6) * problem.scale()).unwrap();
        let widen = |v: &DVector<T>| v.map(|e| e.as_f64());
        (widen(sol.source.values()), widen(&x))
    }
    let (x32, truth32) = run::<f32>();
    let (x64, truth64) = run::<f64>();
    assert!((&x64 - &truth64).norm() / truth64.norm() < 1e-3);
    assert!((&x32 - &truth32).norm() / truth32.norm() < 1e-2);
    assert!((&x32 - &x64).norm() / x64.norm() < 1e-2);
}

fn spd_instance(
    seed: u64,
) -> (
    ForwardModel<f64>,
    BasisSet<f64>,
    PriorSpec<f64>,
    DVector<f64>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(3..10);
    let n = rng.random_range(4..15);
    let s = rng.random_range(1..=n.min(6));
    let fm = wrap(random_matrix(&mut rng, m, n));
    let a = random_matrix(&mut rng, n, s);
    let w: Vec<f64> = {
        let mut w: Vec<f64> = (0..s).map(|_| rng.random_range(0.0..5.0)).collect();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        w
    };
    let basis = BasisSet::new(
        a,
        DVector::from_vec(w),
        esi_core::basis::BasisFamily::Custom,
        None,
    )
    .unwrap();
    let prior = prior_from_weights(basis.weights(), 0.1).unwrap();
    let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    (fm, basis, prior, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn residual_non_decreasing_in_beta(seed in any::<u64>(), e1 in -6.0f64..6.0, e2 in -6.0f64..6.0) {
        let (fm, basis, prior, y) = spd_instance(seed);
        let p = MapProblem::new(&fm, &basis, &prior, None).unwrap();
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let r_lo = p.residual_sq(&y, 10f64.powf(lo) * p.scale()).unwrap();
        let r_hi = p.residual_sq(&y, 10f64.powf(hi) * p.scale()).unwrap();
        prop_assert!(r_lo <= r_hi * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn coefficients_shrink_as_beta_grows(seed in any::<u64>(), e1 in -6.0f64..6.0, e2 in -6.0f64..6.0) {
        let (fm, basis, prior, y) = spd_instance(seed);
        let p = MapProblem::new(&fm, &basis, &prior, None).unwrap();
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let a = p.solve(&y, 10f64.powf(lo) * p.scale()).unwrap().coefficients.unwrap().norm();
        let b = p.solve(&y, 10f64.powf(hi) * p.scale()).unwrap().coefficients.unwrap().norm();
        prop_assert!(a >= b * (1.0 - 1e-12));
    }

    #[test]
    fn normal_equations_hold(seed in any::<u64>(), e in -4.0f64..4.0) {
        let (fm, basis, prior, y) = spd_instance(seed);
        let p = MapProblem::new(&fm, &basis, &prior, None).unwrap();
        let beta = 10f64.powf(e) * p.scale();
        let sol = p.solve(&y, beta).unwrap();
        let th = sol.coefficients.unwrap();
        let l = fm.leadfield() * basis.functions();
        let lhs = l.tr_mul(&(&l * &th)) + th.component_div(&prior.sigma_diag) * beta;
        let rhs = l.tr_mul(&y);
        prop_assert!((lhs - &rhs).norm() <= 1e-9 * rhs.norm().max(1e-300) + 1e-12 * th.norm() * l.norm_squared());
        // x̂ is A θ̂.
        let x = basis.functions() * &th;
        prop_assert!((sol.source.values() - &x).norm() <= 1e-12 * x.norm().max(1e-300));
    }

    #[test]
    fn mne_agreement_holds_for_random_shapes(seed in any::<u64>(), e in -3.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..9);
        let n = rng.random_range(m..25);
        let fm = wrap(random_matrix(&mut rng, m, n));
        let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let beta = 10f64.powf(e);
        let map = solve_map(&y, &fm, &BasisSet::identity(n).unwrap(), &unit_prior(n), beta).unwrap();
        let mne = solve_mne(&y, &fm, None, beta).unwrap();
        let scale = mne.source.values().norm().max(1e-300);
        prop_assert!((map.source.values() - mne.source.values()).norm() / scale < 1e-9);
    }
}
