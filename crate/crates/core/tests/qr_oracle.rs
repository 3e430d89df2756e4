//! Solver objective against exhaustive enumeration of interpolating hyperplanes.

mod common;

use common::{enumerate_best_objective, random_instance};
use exqr::qr::{
    fit_quantile_path, fit_quantile_regression, pinball_loss, Dataset, QuantileLevel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lvl(t: f64) -> QuantileLevel {
    QuantileLevel::new(t).unwrap()
}

fn assert_matches_oracle(data: &Dataset, tau: f64) {
    let fit = fit_quantile_regression(data, lvl(tau)).unwrap();
    let best = enumerate_best_objective(data, tau);
    let tol = 1e-8 * best.max(1e-300) + 1e-13;
    assert!(
        (fit.objective - best).abs() <= tol,
        "tau {tau}: solver {} vs oracle {best}",
        fit.objective
    );
}

#[test]
fn three_point_instance_matches_enumeration() {
    let data = Dataset::from_single(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
    // Lines through two of three points: y = x, y = 2x, y = 3x - 2.
    let best = enumerate_best_objective(&data, 0.5);
    assert!((best - 0.5 / 3.0).abs() < 1e-15);
    assert_matches_oracle(&data, 0.5);
    let fits = fit_quantile_path(&data, &[lvl(0.5), lvl(0.5 + 1e-6)]).unwrap();
    for f in &fits {
        let oracle = enumerate_best_objective(&data, f.tau.value());
        assert!((f.objective - oracle).abs() < 1e-12);
    }
}

#[test]
fn continuous_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let p = rng.gen_range(1..=2);
        let n = rng.gen_range(p + 2..=12);
        let data = random_instance(&mut rng, n, p, false);
        for tau in [0.1, 0.5, 0.9] {
            assert_matches_oracle(&data, tau);
        }
    }
}

// Small integer grids produce ties, duplicate rows and degenerate vertices.
#[test]
fn degenerate_integer_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let p = rng.gen_range(1..=2);
        let n = rng.gen_range(p + 2..=12);
        let data = random_instance(&mut rng, n, p, true);
        for tau in [0.1, 0.25, 0.5, 0.75, 0.9] {
            match fit_quantile_regression(&data, lvl(tau)) {
                Ok(_) => assert_matches_oracle(&data, tau),
                Err(exqr::Error::DegenerateDesign) => {
                    assert!(enumerate_best_objective(&data, tau).is_infinite());
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn single_level_path_equals_direct_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_instance(&mut rng, 30, 1, false);
    let direct = fit_quantile_regression(&data, lvl(0.8)).unwrap();
    let path = fit_quantile_path(&data, &[lvl(0.8)]).unwrap();
    assert_eq!(path, vec![direct]);
}

#[test]
fn exact_line_path() {
    let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
    let data = Dataset::from_single(&x, &y).unwrap();
    for f in fit_quantile_path(&data, &[lvl(0.1), lvl(0.5), lvl(0.9)]).unwrap() {
        assert!((f.alpha - 2.0).abs() < 1e-12 && (f.beta[0] - 3.0).abs() < 1e-12);
    }
}

#[test]
fn warm_started_path_matches_cold_fits() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data = random_instance(&mut rng, 400, 2, false);
    let levels: Vec<QuantileLevel> = (80..100).map(|j| lvl(j as f64 / 101.0)).collect();
    let path = fit_quantile_path(&data, &levels).unwrap();
    for (f, &tau) in path.iter().zip(&levels) {
        let cold = fit_quantile_regression(&data, tau).unwrap();
        assert!((f.objective - cold.objective).abs() <= 1e-10 * cold.objective);
    }
}

fn sign_condition_holds(data: &Dataset, tau: f64) -> bool {
    let fit = fit_quantile_regression(data, lvl(tau)).unwrap();
    let scale = data.response().iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let r = fit.residuals(data);
    let eps = 1e-9 * scale;
    let neg = r.iter().filter(|&&v| v < -eps).count() as f64;
    let nonpos = r.iter().filter(|&&v| v <= eps).count() as f64;
    let target = data.n() as f64 * tau;
    neg <= target + 1e-9 && target <= nonpos + 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pinball_nonnegative_and_homogeneous(u in -1e6f64..1e6, c in 1e-3f64..1e3, tau in 0.01f64..0.99) {
        let t = lvl(tau);
        let l = pinball_loss(u, t).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, u == 0.0);
        let scaled = pinball_loss(c * u, t).unwrap();
        prop_assert!((scaled - c * l).abs() <= 1e-9 * scaled.abs().max(1e-300));
    }

    #[test]
    fn shift_and_scale_equivariance(seed in any::<u64>(), tau in prop::sample::select(vec![0.1, 0.5, 0.9]), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_instance(&mut rng, 25, 1, false);
        let base = fit_quantile_regression(&data, lvl(tau)).unwrap();

        let shifted = fit_quantile_regression(&data.with_shifted_response(shift), lvl(tau)).unwrap();
        prop_assert!((shifted.objective - base.objective).abs() <= 1e-8 * base.objective.max(1e-12));

        let scaled = fit_quantile_regression(&data.with_scaled_response(10.0), lvl(tau)).unwrap();
        prop_assert!((scaled.objective - 10.0 * base.objective).abs() <= 1e-8 * scaled.objective);
    }

    #[test]
    fn sign_condition(seed in any::<u64>(), tau in 0.02f64..0.98, integer in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..40);
        let data = random_instance(&mut rng, n, 1, integer);
        if data.rows().any(|r| r[0] != data.row(0)[0]) {
            prop_assert!(sign_condition_holds(&data, tau));
        }
    }
}

#[test]
fn scaling_example_scales_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = random_instance(&mut rng, 20, 1, false);
    let base = fit_quantile_regression(&data, lvl(0.3)).unwrap();
    let scaled = fit_quantile_regression(&data.with_scaled_response(10.0), lvl(0.3)).unwrap();
    assert!((scaled.alpha - 10.0 * base.alpha).abs() < 1e-9 * (1.0 + base.alpha.abs()));
    assert!((scaled.beta[0] - 10.0 * base.beta[0]).abs() < 1e-9 * (1.0 + base.beta[0].abs()));
}
