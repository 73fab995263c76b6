//! Monte Carlo checks of the marginal model: estimation, transforms and
//! the sandwich covariance.

use poolreg::fit::{self, FitOptions};
use poolreg::gev::{self, ScaleGevParams};
use poolreg::gof;
use poolreg::panel::{BlockMaximaPanel, CovariateSeries};
use poolreg::seed;
use poolreg::sim;
use poolreg::uncertainty;
use rand::Rng;

const TRUTH: [f64; 4] = [20.0, 5.5, 0.1, 1.5];

fn theta() -> ScaleGevParams {
    ScaleGevParams::new(TRUTH[0], TRUTH[1], TRUTH[2], TRUTH[3]).unwrap()
}

/// Inverse-cdf draw written from the model definition.
fn draw<R: Rng>(r: &mut R, c: f64) -> f64 {
    let [mu, sigma, gamma, alpha] = TRUTH;
    let trend = (alpha * c / mu).exp();
    let w = -r.random::<f64>().max(1e-300).ln();
    mu * trend + sigma * trend * (w.powf(-gamma) - 1.0) / gamma
}

fn series(tag: u64, rep: u64, cov: &[f64]) -> Vec<f64> {
    let mut r = seed::derive_rng(77, tag, rep);
    cov.iter().map(|&c| draw(&mut r, c)).collect()
}

fn gev_cdf_oracle(x: f64, c: f64, t: &ScaleGevParams) -> f64 {
    let trend = (t.alpha * c / t.mu).exp();
    let z = (x - t.mu * trend) / (t.sigma * trend);
    let s = 1.0 + t.gamma * z;
    if s <= 0.0 {
        return if t.gamma > 0.0 { 0.0 } else { 1.0 };
    }
    (-s.powf(-1.0 / t.gamma)).exp()
}

#[test]
fn large_sample_estimate_is_close_to_truth() {
    let n = 2000;
    let cov: Vec<f64> = (0..n).map(|t| 3.0 * t as f64 / (n - 1) as f64).collect();
    let x = series(1, 0, &cov);
    let p = fit::fit_scale_gev_with(&x, &cov, &FitOptions::default()).unwrap().params;
    for (est, truth) in [(p.mu, TRUTH[0]), (p.sigma, TRUTH[1]), (p.alpha, TRUTH[3])] {
        assert!((est / truth - 1.0).abs() < 0.05, "{p:?}");
    }
    // the shape's standard error at this n is about 0.02
    assert!((p.gamma - TRUTH[2]).abs() < 0.06, "{p:?}");
}

#[test]
fn pooled_fit_has_lower_variance_than_single_column() {
    let s = sim::Scenario::homogeneous(75);
    let (mut single, mut pooled) = (Vec::new(), Vec::new());
    for rep in 0..200 {
        let mut r = seed::derive_rng(77, 2, rep);
        let panel = sim::generate_scenario_data(&s, &mut r).unwrap();
        let opts = FitOptions::default();
        single.push(fit::fit_pooled_with(&panel, &[s.loi], &opts).unwrap().params.to_array());
        pooled.push(fit::fit_pooled_with(&panel, &[4, 5, 6, 8, 9, 10], &opts).unwrap().params.to_array());
    }
    let var = |v: &[[f64; 4]], k: usize| {
        let m = v.iter().map(|p| p[k]).sum::<f64>() / v.len() as f64;
        v.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    for k in 0..4 {
        assert!(var(&pooled, k) < var(&single, k), "component {k}");
    }
}

#[test]
fn pooled_fit_of_one_location_matches_single_fit() {
    let cov = sim::default_covariate(60, 0.925);
    let x = series(3, 0, &cov);
    let panel = BlockMaximaPanel::new(
        vec![x.clone(), series(3, 1, &cov)],
        CovariateSeries::new(cov.clone()).unwrap(),
        vec![[0.0, 0.0], [1.0, 0.0]],
        vec!["a".into(), "b".into()],
        0,
    )
    .unwrap();
    let opts = FitOptions::default();
    let a = fit::fit_pooled_with(&panel, &[0], &opts).unwrap().params;
    let b = fit::fit_scale_gev_with(&x, &cov, &opts).unwrap().params;
    assert_eq!(a, b);
    // duplicated columns only rescale the objective
    let dup = fit::fit_columns(&[&x, &x], &cov, &opts).unwrap().params;
    for (u, v) in dup.to_array().iter().zip(b.to_array()) {
        assert!((u - v).abs() < 1e-4 * v.abs().max(1.0), "{dup:?} vs {b:?}");
    }
}

#[test]
fn frechet_transform_of_model_data_is_unit_frechet() {
    let cov = sim::default_covariate(75, 0.925);
    let mut passes = 0;
    for rep in 0..200 {
        let x = series(4, rep, &cov);
        let y = gev::to_frechet(&x, &theta(), &cov);
        let p = gof::ks_test(&y, |v| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 }).unwrap().p_value;
        if p > 0.01 {
            passes += 1;
        }
    }
    assert!(passes >= 190, "{passes} of 200");
}

#[test]
fn back_transformed_frechet_sample_follows_the_model() {
    let cov = sim::default_covariate(5000, 0.925);
    let mut r = seed::derive_rng(77, 5, 0);
    let y: Vec<f64> = (0..cov.len()).map(|_| -1.0 / r.random::<f64>().max(1e-300).ln()).collect();
    let x = gev::from_frechet(&y, &theta(), &cov).unwrap();
    // probability integral transform with the effective parameters of each year
    let u: Vec<f64> = x.iter().zip(&cov).map(|(&v, &c)| gev_cdf_oracle(v, c, &theta())).collect();
    let ks = gof::ks_test(&u, |v| v.clamp(0.0, 1.0)).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn sandwich_diagonal_block_matches_inverse_information() {
    let n = 5000;
    let cov: Vec<f64> = (0..n).map(|t| 2.0 * t as f64 / (n - 1) as f64).collect();
    let x = series(6, 0, &cov);
    let f = fit::fit_scale_gev_with(&x, &cov, &FitOptions::default()).unwrap();
    let sigma = uncertainty::estimate_sigma_columns(&[&x], &cov, &[f.params], &[f.hessian]).unwrap();
    let inv_info = (-f.hessian).try_inverse().unwrap();
    let block = sigma.block(0, 0);
    // under a correct model both estimate the same asymptotic covariance
    for i in 0..4 {
        let rel = (block[(i, i)] / inv_info[(i, i)] - 1.0).abs();
        assert!(rel < 0.15, "diagonal {i}: {} vs {}", block[(i, i)], inv_info[(i, i)]);
    }
}

#[test]
fn cross_block_vanishes_for_independent_columns() {
    let n = 2000;
    let cov = sim::default_covariate(n, 0.925);
    let mut entries: Vec<[f64; 16]> = Vec::new();
    for rep in 0..200 {
        let cols = [series(7, 2 * rep, &cov), series(7, 2 * rep + 1, &cov)];
        let fits: Vec<_> = cols
            .iter()
            .map(|c| fit::fit_scale_gev_with(c, &cov, &FitOptions::default()).unwrap())
            .collect();
        let params: Vec<_> = fits.iter().map(|f| f.params).collect();
        let hess: Vec<_> = fits.iter().map(|f| f.hessian).collect();
        let s = uncertainty::estimate_sigma_columns(&[&cols[0], &cols[1]], &cov, &params, &hess).unwrap();
        // correlation scale, so all entries are comparable
        let (b, d0, d1) = (s.block(0, 1), s.block(0, 0), s.block(1, 1));
        entries.push(std::array::from_fn(|k| {
            let (i, j) = (k / 4, k % 4);
            b[(i, j)] / (d0[(i, i)] * d1[(j, j)]).sqrt()
        }));
    }
    for k in 0..16 {
        let v: Vec<f64> = entries.iter().map(|e| e[k]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let stderr = sd / (v.len() as f64).sqrt();
        assert!(m.abs() < 3.0 * stderr.max(1e-12), "entry {k}: mean {m}, stderr {stderr}");
    }
}
