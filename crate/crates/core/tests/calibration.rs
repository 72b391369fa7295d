use approx::assert_relative_eq;
use gosset::calibration::{
    estimate_nu, estimate_nu_from_ratios, estimate_nu_with, expected_volatility, fit_chi, fit_chi_with,
    normalized_vol_curve, normalized_volatility, ratio_uncertainty_with, simulate_scaled_window_study,
    simulate_window_study, window_volatilities, CovarianceForm, FitMethod, FitTarget, ObservedRatio,
};
use gosset::quadrature::{integrate_second_moment, Interval, QuadratureConfig};
use gosset::{ChiParams, GossetError, ReturnDistribution, ReturnSeries, VolatilityCurve, WindowStudy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

fn t(nu: f64) -> ReturnDistribution {
    ReturnDistribution::from_nu(nu).unwrap()
}

fn t_series(nu: f64, n: usize, seed: u64) -> ReturnSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = t(nu).sampler();
    ReturnSeries::new((0..n).map(|_| 0.01 * s.sample(&mut rng)).collect(), "synthetic").unwrap()
}

#[test]
fn expected_volatility_table_values() {
    let d = t(3.0);
    for (p, want) in [(1.0, 1.73), (20.0 / 22.0, 1.01), (18.0 / 22.0, 0.816)] {
        let v = expected_volatility(&d, p).unwrap();
        assert!((v - want).abs() <= 0.005, "t3 p {p}: {v}");
    }
    let n = ReturnDistribution::normal();
    for (p, want) in [(1.0, 1.73), (20.0 / 22.0, 1.39), (18.0 / 22.0, 1.18)] {
        let v = 3f64.sqrt() * expected_volatility(&n, p).unwrap();
        assert!((v - want).abs() <= 0.005, "normal p {p}: {v}");
    }
}

#[test]
fn normalized_table_values() {
    for (nu, p, want) in [
        (3.0, 20.0 / 22.0, 0.584),
        (3.0, 18.0 / 22.0, 0.471),
        (f64::INFINITY, 20.0 / 22.0, 0.803),
        (f64::INFINITY, 18.0 / 22.0, 0.683),
    ] {
        let r = normalized_volatility(&t(nu), p).unwrap();
        assert!((r - want).abs() <= 0.002, "nu {nu} p {p}: {r}");
    }
    for p in [20.0 / 22.0, 18.0 / 22.0] {
        let far = normalized_volatility(&t(1e5), p).unwrap();
        let limit = normalized_volatility(&ReturnDistribution::normal(), p).unwrap();
        assert!((far - limit).abs() < 1e-3);
    }
}

#[test]
fn full_range_matches_wide_quadrature() {
    // tail mass beyond ±1e9 contributes below 1e-8 relative for these ν
    let wide = Interval::symmetric(1e9).unwrap();
    for nu in [3.5, 5.0, 10.0, 40.0] {
        let d = t(nu);
        let m2 = integrate_second_moment(&d, wide, &QuadratureConfig::default()).unwrap();
        let v = expected_volatility(&d, 1.0).unwrap();
        assert_relative_eq!(v * v, nu / (nu - 2.0), max_relative = 1e-12);
        assert_relative_eq!(m2, nu / (nu - 2.0), max_relative = 1e-8);
    }
}

#[test]
fn truncated_second_moment_closed_form() {
    // E[T²; |T| ≤ a] = ν [(ν−1)/(ν−2) P_{ν−2}(|U| ≤ a√((ν−2)/ν)) − P_ν(|T| ≤ a)]
    for nu in [2.5, 3.0, 4.0, 8.0, 21.0] {
        let d = t(nu);
        let lower = t(nu - 2.0);
        for p in [0.5, 18.0 / 22.0, 20.0 / 22.0, 0.99] {
            let a = d.two_sided_critical(p).unwrap();
            let b = a * ((nu - 2.0) / nu).sqrt();
            let m2 = nu * ((nu - 1.0) / (nu - 2.0) * (lower.cdf(b) - lower.cdf(-b)) - p);
            let v = expected_volatility(&d, p).unwrap();
            assert_relative_eq!(v, (m2 / p).sqrt(), max_relative = 1e-9);
        }
    }
}

#[test]
fn divergent_configurations_rejected() {
    assert!(expected_volatility(&t(2.0), 1.0).is_err());
    assert!(expected_volatility(&t(1.5), 1.0).is_err());
    assert!(expected_volatility(&t(1.5), 0.9).is_ok());
    assert!(expected_volatility(&t(3.0), 0.0).is_err());
    assert!(expected_volatility(&t(3.0), 1.2).is_err());
}

#[test]
fn curve_increases_toward_normal_limit() {
    let grid = [2.2, 2.5, 3.0, 4.0, 6.0, 8.0, 13.0, 21.0, 40.0, 100.0, 1e3, 1e4];
    let fractions = [20.0 / 22.0, 18.0 / 22.0];
    let pts = normalized_vol_curve(&grid, &fractions).unwrap();
    for (j, &p) in fractions.iter().enumerate() {
        let top = normalized_volatility(&ReturnDistribution::normal(), p).unwrap();
        let col: Vec<f64> = pts.iter().skip(j).step_by(2).map(|c| c.ratio).collect();
        assert!(col.windows(2).all(|w| w[1] > w[0]), "{col:?}");
        assert!(col.iter().all(|&r| r < top && r > 0.0));
    }
    // fewer kept values means a lower curve
    for pair in pts.chunks(2) {
        assert!(pair[1].ratio < pair[0].ratio);
    }
}

#[test]
fn truncated_curve_round_trip() {
    let curve = VolatilityCurve::truncated(22, &[2, 4]).unwrap();
    for nu in [2.5, 3.0, 5.0, 13.0, 60.0] {
        for drop in [2, 4] {
            let r = curve.ratio(drop, nu).unwrap();
            assert_relative_eq!(curve.invert(drop, r).unwrap(), nu, max_relative = 1e-7);
        }
    }
    let r3 = curve.ratio(2, 3.0).unwrap();
    assert!((r3 - 0.584).abs() < 1e-3);
    assert!(matches!(curve.invert(2, 0.85), Err(GossetError::NoSolution(_))));
    assert!(matches!(curve.invert(2, curve.asymptote(2).unwrap()), Err(GossetError::NoSolution(_))));
    assert_eq!(curve.invert(2, 0.01).unwrap(), curve.nu_floor());
}

#[test]
fn simulated_curve_round_trip() {
    let curve = VolatilityCurve::simulated(22, &[2, 4], 4000, 5).unwrap();
    let again = VolatilityCurve::simulated(22, &[2, 4], 4000, 5).unwrap();
    assert_eq!(curve, again);
    for drop in [2, 4] {
        let mut prev = 0.0;
        for nu in [2.25, 3.0, 4.5, 9.0, 18.0, 75.0, 1e4] {
            let r = curve.ratio(drop, nu).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        let r = curve.ratio(drop, 6.5).unwrap();
        if r < curve.ratio(drop, 7.0).unwrap() && r > curve.ratio(drop, 6.0).unwrap() {
            assert_relative_eq!(curve.invert(drop, r).unwrap(), 6.5, max_relative = 1e-9);
        }
    }
    // finite windows sit above the large-window limit for normal data
    let limit = VolatilityCurve::truncated(22, &[2]).unwrap();
    assert!(curve.asymptote(2).unwrap() > limit.asymptote(2).unwrap() + 0.02);
}

#[test]
fn window_lengths_from_long_horizons() {
    // 44- and 88-day ratios on the truncated curve for the published index data
    let curve44 = VolatilityCurve::truncated(44, &[4, 8]).unwrap();
    for (r2, u2, r4, u4) in [(0.773, 0.012, 0.646, 0.012), (0.776, 0.016, 0.649, 0.016)] {
        let res = estimate_nu_from_ratios(
            &curve44,
            &[
                ObservedRatio { drop: 4, ratio: r2, uncertainty: u2 },
                ObservedRatio { drop: 8, ratio: r4, uncertainty: u4 },
            ],
        )
        .unwrap();
        assert!((9.0..=17.0).contains(&res.nu_hat), "{res:?}");
        assert!(res.nu_ci.0 <= res.nu_hat && res.nu_hat <= res.nu_ci.1);
    }
    let curve88 = VolatilityCurve::truncated(88, &[8, 16]).unwrap();
    for (r2, u2, r4, u4) in [(0.748, 0.017, 0.622, 0.016), (0.753, 0.023, 0.626, 0.021)] {
        let res = estimate_nu_from_ratios(
            &curve88,
            &[
                ObservedRatio { drop: 8, ratio: r2, uncertainty: u2 },
                ObservedRatio { drop: 16, ratio: r4, uncertainty: u4 },
            ],
        )
        .unwrap();
        assert!((6.0..=10.0).contains(&res.nu_hat), "{res:?}");
        assert!(res.nu_ci.0 <= res.nu_hat && res.nu_hat <= res.nu_ci.1);
    }
}

#[test]
fn constant_series_has_zero_volatility() {
    let s = ReturnSeries::new(vec![0.001; 66], "flat").unwrap();
    let study = window_volatilities(&s, 22, &[2, 4]).unwrap();
    assert_eq!(study.n_windows(), 3);
    for d in [0, 2, 4] {
        assert!(study.volatilities(d).unwrap().iter().all(|&v| v.abs() < 1e-15));
    }
    let err = estimate_nu(&study).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn short_series_rejected() {
    let s = ReturnSeries::new(vec![0.01, -0.01, 0.02], "short").unwrap();
    assert!(window_volatilities(&s, 22, &[2]).is_err());
}

#[test]
fn simulation_is_deterministic() {
    let a = simulate_window_study(&t(3.0), 22, &[2, 4], 500, 11).unwrap();
    let b = simulate_window_study(&t(3.0), 22, &[2, 4], 500, 11).unwrap();
    let c = simulate_window_study(&t(3.0), 22, &[2, 4], 500, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn simulated_normal_study_levels() {
    let s = simulate_scaled_window_study(&ReturnDistribution::normal(), 3f64.sqrt(), 22, &[2, 4], 20_000, 3).unwrap();
    for (d, mean, sd, median) in [(0, 1.71, 0.27, 1.70), (2, 1.43, 0.24, 1.41), (4, 1.22, 0.23, 1.21)] {
        let sm = s.summary(d).unwrap();
        assert!((sm.mean - mean).abs() < 0.02, "drop {d}: {sm:?}");
        assert!((sm.std - sd).abs() < 0.02, "drop {d}: {sm:?}");
        assert!((sm.median - median).abs() < 0.02, "drop {d}: {sm:?}");
    }
}

#[test]
fn simulated_t3_study_levels() {
    let s = simulate_window_study(&t(3.0), 22, &[2, 4], 20_000, 4).unwrap();
    let full = s.summary(0).unwrap();
    let d2 = s.summary(2).unwrap();
    let d4 = s.summary(4).unwrap();
    // large-sample values from an inverse-cdf sampler (1e5 windows)
    assert!((full.median - 1.4456).abs() < 0.02, "{full:?}");
    assert!((full.mean - 1.583).abs() < 0.04, "{full:?}");
    assert!((d2.median - 1.0560).abs() < 0.01, "{d2:?}");
    assert!((d2.mean - 1.0881).abs() < 0.01, "{d2:?}");
    assert!((d4.median - 0.8552).abs() < 0.01, "{d4:?}");
    assert!((d4.mean - 0.8743).abs() < 0.01, "{d4:?}");
    // dropping extremes collapses the spread for t data only
    let n = simulate_scaled_window_study(&ReturnDistribution::normal(), 3f64.sqrt(), 22, &[2], 20_000, 4).unwrap();
    assert!(d2.std < 0.5 * full.std);
    let (n0, n2) = (n.summary(0).unwrap().std, n.summary(2).unwrap().std);
    assert!(n2 > 0.8 * n0);
}

#[test]
fn ratio_uncertainty_for_index_sized_study() {
    // 676 normal windows: the single-coefficient form gives a band near ±0.010
    let s = simulate_window_study(&ReturnDistribution::normal(), 22, &[2, 4], 676, 8).unwrap();
    let single = s.ratio(2, CovarianceForm::Single).unwrap();
    let double = s.ratio(2, CovarianceForm::Double).unwrap();
    assert!((0.007..0.013).contains(&single.uncertainty), "{single:?}");
    assert!(double.uncertainty < single.uncertainty);
    let d4 = s.ratio(4, CovarianceForm::Single).unwrap();
    assert!((0.007..0.015).contains(&d4.uncertainty), "{d4:?}");
}

#[test]
fn double_form_can_go_negative() {
    let r = ratio_uncertainty_with(1.0, 0.01, 0.8, 0.008, 1e-4, CovarianceForm::Double);
    assert!(matches!(r, Err(GossetError::NegativeVariance(_))));
    assert!(ratio_uncertainty_with(1.0, 0.01, 0.8, 0.008, 1e-4, CovarianceForm::Single).is_ok());
}

#[test]
fn estimate_recovers_shape_on_synthetic_series() {
    let curve = VolatilityCurve::simulated(22, &[2, 4], 20_000, 99).unwrap();
    for (nu, seed) in [(4.0, 1), (8.0, 2)] {
        let series = t_series(nu, 22 * 800, seed);
        let study = window_volatilities(&series, 22, &[2, 4]).unwrap();
        let res = estimate_nu_with(&study, &curve, CovarianceForm::Single).unwrap();
        assert!(res.nu_ci.0 <= nu && nu <= res.nu_ci.1, "nu {nu}: {res:?}");
        assert!(res.levels.iter().all(|l| l.nu_ci.0 <= l.nu_hat && l.nu_hat <= l.nu_ci.1));
        assert!(res.levels[1].ratio < res.levels[0].ratio && res.levels[0].ratio < 1.0);
    }
}

#[test]
fn curve_must_match_window() {
    let study = simulate_window_study(&t(5.0), 44, &[4], 50, 1).unwrap();
    let curve = VolatilityCurve::truncated(22, &[2]).unwrap();
    assert!(estimate_nu_with(&study, &curve, CovarianceForm::Single).is_err());
}

fn chi_draws(k: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = ChiParams::new(k, scale).unwrap().sampler();
    (0..n).map(|_| s.sample(&mut rng)).collect()
}

#[test]
fn chi_fit_recovers_parameters() {
    let xs = chi_draws(5.0, 2.0, 100_000, 21);
    for method in [FitMethod::MaximumLikelihood, FitMethod::BinnedLeastSquares] {
        let fit = fit_chi_with(&xs, FitTarget::Volatility, method, None).unwrap();
        assert_relative_eq!(fit.params.k(), 5.0, max_relative = 0.05);
        assert_relative_eq!(fit.params.scale(), 2.0, max_relative = 0.05);
        assert!(fit.ks < 0.01, "{method:?}: ks {}", fit.ks);
        assert!(fit.ssr.is_finite());
    }
    // reciprocal target inverts first
    let inv: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
    let fit = fit_chi(&inv, FitTarget::ReciprocalVolatility).unwrap();
    assert_relative_eq!(fit.params.k(), 5.0, max_relative = 0.05);
}

#[test]
fn half_normal_is_chi_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..50_000)
        .map(|_| rand_distr::StandardNormal.sample(&mut rng))
        .map(|z: f64| z.abs())
        .collect();
    let fit = fit_chi(&xs, FitTarget::Volatility).unwrap();
    assert!((fit.params.k() - 1.0).abs() < 0.03, "{:?}", fit.params);
    assert!((fit.params.scale() - 1.0).abs() < 0.03);
}

#[test]
fn inverse_chi_data_has_heavier_right_tail() {
    let xs: Vec<f64> = chi_draws(21.0, 1.0, 100_000, 8).iter().map(|x| 1.0 / x).collect();
    let fit = fit_chi(&xs, FitTarget::Volatility).unwrap();
    assert!(fit.right_tail_excess > 0.0, "{}", fit.right_tail_excess);
    let q = fit.cdf.iter().find(|c| c.fitted >= 0.95).unwrap().x;
    let tail: f64 = fit.bins.iter().filter(|b| b.lo >= q).map(|b| b.residual * (b.hi - b.lo)).sum();
    assert!(tail > 0.0);
    // a genuine chi sample shows no such excess
    let clean = fit_chi(&chi_draws(21.0, 1.0, 100_000, 8), FitTarget::Volatility).unwrap();
    assert!(clean.right_tail_excess.abs() < fit.right_tail_excess);
}

#[test]
fn chi_fit_outputs_are_consistent() {
    let xs = chi_draws(3.0, 0.5, 5_000, 2);
    let fit = fit_chi(&xs, FitTarget::Volatility).unwrap();
    assert!(fit.cdf.windows(2).all(|w| w[1].empirical >= w[0].empirical && w[1].fitted >= w[0].fitted));
    assert_eq!(fit.cdf.last().unwrap().empirical, 1.0);
    let area: f64 = fit.bins.iter().map(|b| b.observed * (b.hi - b.lo)).sum();
    assert_relative_eq!(area, 1.0, max_relative = 1e-12);
}

#[test]
fn chi_fit_rejects_bad_samples() {
    assert!(fit_chi(&[1.0; 10], FitTarget::Volatility).is_err());
    let mut xs = chi_draws(3.0, 1.0, 100, 1);
    xs[5] = 0.0;
    assert!(fit_chi(&xs, FitTarget::Volatility).is_err());
    assert!(fit_chi(&[2.0; 40], FitTarget::Volatility).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dropping_extremes_orders_ratios(
        nu in prop_oneof![2.5f64..30.0, Just(f64::INFINITY)],
        scale in 1e-3f64..10.0,
        seed in any::<u64>(),
    ) {
        let study: WindowStudy =
            simulate_scaled_window_study(&t(nu), scale, 22, &[2, 4], 200, seed).unwrap();
        let r2 = study.ratio(2, CovarianceForm::Single).unwrap().ratio;
        let r4 = study.ratio(4, CovarianceForm::Single).unwrap().ratio;
        prop_assert!(r4 < r2 && r2 < 1.0);
    }
}
