//! Monte Carlo checks of the dependence models: recovery, selection and
//! closed-form joint distributions.

use poolreg::dependence::{
    self, BivEvFamily, BivEvSpec, DependenceSpec, MaxStableFamily, MaxStableSpec,
};
use poolreg::seed;
use poolreg::sim;
use rand::Rng;

const SMITH: MaxStableSpec = MaxStableSpec::Smith {
    s11: 0.4,
    s12: 0.2,
    s22: 0.9,
};

#[test]
fn smith_fit_recovers_parameters_on_grid() {
    let coords = sim::grid_coords();
    let mut r = seed::derive_rng(91, 1, 0);
    let y = dependence::simulate_max_stable(&SMITH, &coords, 300, &mut r).unwrap();
    let fit = dependence::fit_max_stable(&y, &coords, MaxStableFamily::Smith).unwrap();
    let DependenceSpec::MaxStable(MaxStableSpec::Smith { s11, s12, s22 }) = fit.spec else {
        panic!("{:?}", fit.spec)
    };
    for (est, truth) in [(s11, 0.4), (s12, 0.2), (s22, 0.9)] {
        assert!((est / truth - 1.0).abs() < 0.25, "{:?}", fit.spec);
    }
}

#[test]
fn independent_columns_push_fits_to_independence() {
    let coords = sim::grid_coords();
    let mut r = seed::derive_rng(91, 2, 0);
    let y: Vec<Vec<f64>> = (0..coords.len())
        .map(|_| (0..200).map(|_| -1.0 / r.random::<f64>().max(1e-300).ln()).collect())
        .collect();
    let far = [3.0, 3.0];
    // Schlather's coefficient is bounded by 1 + 1/sqrt(2), reached at zero correlation
    let ceiling = 1.0 + std::f64::consts::FRAC_1_SQRT_2;
    for (family, floor) in [
        (MaxStableFamily::Schlather, ceiling - 0.02),
        (MaxStableFamily::BrownResnick, 1.9),
    ] {
        let fit = dependence::fit_max_stable(&y, &coords, family).unwrap();
        let DependenceSpec::MaxStable(spec) = fit.spec else { panic!() };
        let theta = spec.extremal_coefficient(far);
        assert!(theta >= floor, "{family:?}: {theta} ({spec:?})");
    }
}

#[test]
fn smith_data_selects_smith_most_of_the_time() {
    let coords = sim::grid_coords();
    let mut hits = 0;
    for rep in 0..100 {
        let mut r = seed::derive_rng(91, 3, rep);
        let y = dependence::simulate_max_stable(&SMITH, &coords, 75, &mut r).unwrap();
        let best = dependence::select_max_stable(&y, &coords).unwrap();
        if matches!(best.spec, DependenceSpec::MaxStable(MaxStableSpec::Smith { .. })) {
            hits += 1;
        }
    }
    assert!(hits >= 60, "Smith selected {hits} of 100 times");
}

#[test]
fn restricted_candidate_list_returns_that_family() {
    let coords = sim::grid_coords();
    let mut r = seed::derive_rng(91, 4, 0);
    let y = dependence::simulate_max_stable(&SMITH, &coords, 75, &mut r).unwrap();
    let best = dependence::select_max_stable_from(&y, &coords, &[MaxStableFamily::BrownResnick]).unwrap();
    assert!(matches!(best.spec, DependenceSpec::MaxStable(MaxStableSpec::BrownResnick { .. })));
    let (y1, y2) = (&y[0], &y[1]);
    let best = dependence::select_biv_ev_from(y1, y2, &[BivEvFamily::HuslerReiss]).unwrap();
    assert!(matches!(best.spec, DependenceSpec::Bivariate(BivEvSpec::HuslerReiss { .. })));
}

#[test]
fn symmetric_data_prefers_the_logistic_model() {
    let mut logistic = 0;
    for rep in 0..100 {
        let mut r = seed::derive_rng(91, 5, rep);
        let (y1, y2) = dependence::simulate_biv_ev(&BivEvSpec::Logistic { r: 0.6 }, 200, &mut r).unwrap();
        let best =
            dependence::select_biv_ev_from(&y1, &y2, &[BivEvFamily::Logistic, BivEvFamily::AsymmetricLogistic])
                .unwrap();
        if matches!(best.spec, DependenceSpec::Bivariate(BivEvSpec::Logistic { .. })) {
            logistic += 1;
        }
    }
    assert!(logistic >= 60, "logistic preferred {logistic} of 100 times");
}

#[test]
fn logistic_diagonal_cdf_matches_closed_form() {
    let r_dep = 0.5;
    let n = 50_000;
    let mut r = seed::derive_rng(91, 6, 0);
    let (y1, y2) = dependence::simulate_biv_ev(&BivEvSpec::Logistic { r: r_dep }, n, &mut r).unwrap();
    for y in [1.0, 2.0, 5.0] {
        let emp = y1.iter().zip(&y2).filter(|(a, b)| **a <= y && **b <= y).count() as f64 / n as f64;
        let exact = (-(2f64).powf(r_dep) / y).exp();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((emp - exact).abs() < 4.0 * se, "y = {y}: {emp} vs {exact}");
    }
    assert!((BivEvSpec::Logistic { r: r_dep }.extremal_coefficient() - 2f64.powf(r_dep)).abs() < 1e-12);
}

#[test]
fn logistic_independence_case_is_uncorrelated() {
    let n = 20_000;
    let mut r = seed::derive_rng(91, 7, 0);
    let (y1, y2) = dependence::simulate_biv_ev(&BivEvSpec::Logistic { r: 1.0 }, n, &mut r).unwrap();
    let a: Vec<f64> = y1.iter().map(|v| 1.0 / v).collect();
    let b: Vec<f64> = y2.iter().map(|v| 1.0 / v).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n as f64).sqrt();
    let corr = cov / (sa * sb);
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
}

#[test]
fn extremal_coefficients_stay_in_range() {
    let mut r = seed::derive_rng(91, 8, 0);
    for _ in 0..500 {
        let h = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        let specs = [
            MaxStableSpec::Smith {
                s11: r.random_range(0.1..3.0),
                s12: 0.0,
                s22: r.random_range(0.1..3.0),
            },
            MaxStableSpec::Schlather {
                nugget: r.random_range(0.0..0.9),
                range: r.random_range(0.1..5.0),
                smooth: r.random_range(0.1..2.0),
            },
            MaxStableSpec::BrownResnick {
                range: r.random_range(0.1..5.0),
                smooth: r.random_range(0.1..2.0),
            },
        ];
        for s in specs {
            let t = s.extremal_coefficient(h);
            assert!((1.0..=2.0).contains(&t), "{s:?} at {h:?}: {t}");
        }
    }
}
