//! Bivariate extreme-value models: full-likelihood fits, AIC selection, simulation.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::{select_best, BivEvFamily, BivEvSpec, DependenceFit, DependenceSpec};
use crate::error::{Error, Result};
use crate::optim::{self, NelderMeadOptions};

const MIN_PAIRS: usize = 20;
const HR_BOUNDS: (f64, f64) = (1e-3, 50.0);
const R_BOUNDS: (f64, f64) = (0.02, 1.0);

fn loglik(spec: &BivEvSpec, y1: &[f64], y2: &[f64]) -> f64 {
    let m = spec.pair_model();
    y1.iter().zip(y2).map(|(&a, &b)| m.log_density(a, b)).sum()
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn check_pair(y1: &[f64], y2: &[f64]) -> Result<()> {
    if y1.len() != y2.len() {
        return Err(Error::InvalidInput(format!(
            "pair columns have lengths {} and {}",
            y1.len(),
            y2.len()
        )));
    }
    if y1.len() < MIN_PAIRS {
        return Err(Error::InvalidInput(format!(
            "bivariate fitting needs at least {MIN_PAIRS} pairs, got {}",
            y1.len()
        )));
    }
    if y1.iter().chain(y2).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("Fréchet values must be positive and finite".into()));
    }
    Ok(())
}

/// Maximum-likelihood fit of one bivariate family with unit-Fréchet margins; the criterion is AIC.
pub fn fit_biv_ev(y1: &[f64], y2: &[f64], family: BivEvFamily) -> Result<DependenceFit> {
    check_pair(y1, y2)?;
    let nll = |spec: BivEvSpec| -loglik(&spec, y1, y2);
    let mut warnings = Vec::new();
    let (spec, converged, boundary) = match family {
        BivEvFamily::HuslerReiss => {
            let (lo, hi) = (HR_BOUNDS.0.ln(), HR_BOUNDS.1.ln());
            let u = golden_section(|u| nll(BivEvSpec::HuslerReiss { lambda: u.exp() }), lo, hi, 1e-7);
            let boundary = u - lo < 1e-3 || hi - u < 1e-3;
            (BivEvSpec::HuslerReiss { lambda: u.exp() }, true, boundary)
        }
        BivEvFamily::Logistic => {
            let r = golden_section(|r| nll(BivEvSpec::Logistic { r }), R_BOUNDS.0, R_BOUNDS.1, 1e-8);
            let boundary = r > R_BOUNDS.1 - 1e-3 || r < R_BOUNDS.0 + 1e-3;
            (BivEvSpec::Logistic { r }, true, boundary)
        }
        BivEvFamily::AsymmetricLogistic => {
            let r0 = golden_section(|r| nll(BivEvSpec::Logistic { r }), R_BOUNDS.0, R_BOUNDS.1, 1e-6);
            let objective = |x: &[f64]| {
                let (r, t1) = (x[0], x[1]);
                if !(R_BOUNDS.0..=R_BOUNDS.1).contains(&r) || !(0.0..=1.0).contains(&t1) {
                    return f64::INFINITY;
                }
                nll(BivEvSpec::AsymmetricLogistic { r, t1 }) / y1.len() as f64
            };
            let start = [r0.min(0.95), 0.9];
            let opts = NelderMeadOptions {
                max_evals: 600,
                f_tol: 1e-11,
                x_tol: 1e-6,
            };
            let res = optim::nelder_mead(objective, &start, &[-0.1, -0.2], &opts);
            let (r, t1) = (res.x[0], res.x[1]);
            let boundary = r > R_BOUNDS.1 - 1e-3 || r < R_BOUNDS.0 + 1e-3 || !(1e-3..=1.0 - 1e-3).contains(&t1);
            (
                BivEvSpec::AsymmetricLogistic { r, t1 },
                res.converged && res.fx.is_finite(),
                boundary,
            )
        }
    };
    let ll = loglik(&spec, y1, y2);
    if !ll.is_finite() {
        return Err(Error::Fit(format!("{family:?} likelihood is not finite at {spec:?}")));
    }
    if boundary {
        warnings.push(format!("{family:?} fit ended at a parameter boundary: {spec:?}"));
    }
    let p = family.n_params() as f64;
    Ok(DependenceFit {
        spec: DependenceSpec::Bivariate(spec),
        criterion: 2.0 * p - 2.0 * ll,
        loglik: ll,
        converged,
        at_boundary: boundary,
        warnings,
    })
}

pub fn select_biv_ev(y1: &[f64], y2: &[f64]) -> Result<DependenceFit> {
    select_biv_ev_from(y1, y2, &BivEvFamily::ALL)
}

/// AIC selection restricted to the given candidate families.
pub fn select_biv_ev_from(y1: &[f64], y2: &[f64], families: &[BivEvFamily]) -> Result<DependenceFit> {
    check_pair(y1, y2)?;
    if families.is_empty() {
        return Err(Error::Selection("no candidate bivariate families".into()));
    }
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for &f in families {
        match fit_biv_ev(y1, y2, f) {
            Ok(fit) => fits.push(fit),
            Err(e) => errors.push(format!("{f:?}: {e}")),
        }
    }
    select_best(fits).map_err(|e| {
        if errors.is_empty() {
            e
        } else {
            Error::Selection(format!("{e} ({})", errors.join("; ")))
        }
    })
}

/// Positive stable variable with Laplace transform `exp(-s^r)` (Kanter's representation).
fn positive_stable<R: Rng + ?Sized>(r: f64, rng: &mut R) -> f64 {
    if r >= 1.0 {
        return 1.0;
    }
    let u: f64 = rng.random::<f64>() * std::f64::consts::PI;
    let w: f64 = rng.sample(Exp1);
    let a = (r * u).sin() / u.sin().powf(1.0 / r);
    let b = ((1.0 - r) * u).sin() / w;
    a * b.powf((1.0 - r) / r)
}

fn logistic_pair<R: Rng + ?Sized>(r: f64, rng: &mut R) -> (f64, f64) {
    let s = positive_stable(r, rng);
    let e1: f64 = rng.sample(Exp1);
    let e2: f64 = rng.sample(Exp1);
    ((s / e1).powf(r), (s / e2).powf(r))
}

/// Hüsler–Reiss pair via extremal functions with log-normal spectral increments.
fn husler_reiss_pair<R: Rng + ?Sized>(a: f64, rng: &mut R) -> (f64, f64) {
    let mut z = [0.0f64; 2];
    for k in 0..2 {
        let mut arrival: f64 = rng.sample(Exp1);
        let mut zeta = 1.0 / arrival;
        while zeta > z[k] {
            let n: f64 = rng.sample(StandardNormal);
            let mut y = [1.0; 2];
            y[1 - k] = (a * n - 0.5 * a * a).exp();
            if k == 0 || zeta * y[0] < z[0] {
                for j in k..2 {
                    z[j] = z[j].max(zeta * y[j]);
                }
            }
            let e: f64 = rng.sample(Exp1);
            arrival += e;
            zeta = 1.0 / arrival;
        }
    }
    (z[0], z[1])
}

/// Simulates `n` independent pairs with unit-Fréchet margins.
pub fn simulate_biv_ev<R: Rng + ?Sized>(spec: &BivEvSpec, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = match *spec {
            BivEvSpec::HuslerReiss { lambda } => husler_reiss_pair(lambda, rng),
            BivEvSpec::Logistic { r } => logistic_pair(r, rng),
            BivEvSpec::AsymmetricLogistic { r, t1 } => {
                let (l1, l2) = logistic_pair(r, rng);
                let e: f64 = rng.sample(Exp1);
                (((1.0 - t1) / e).max(t1 * l1), l2)
            }
        };
        y1.push(a);
        y2.push(b);
    }
    Ok((y1, y2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_joint_cdf_on_diagonal() {
        let r = 0.5;
        let (y1, y2) =
            simulate_biv_ev(&BivEvSpec::Logistic { r }, 40000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for &y in &[1.0, 2.0, 5.0] {
            let emp = y1.iter().zip(&y2).filter(|(a, b)| **a <= y && **b <= y).count() as f64 / 40000.0;
            let exact = (-(2f64.powf(r)) / y).exp();
            let se = (exact * (1.0 - exact) / 40000.0).sqrt();
            assert!((emp - exact).abs() < 4.0 * se, "y = {y}: {emp} vs {exact}");
        }
    }

    #[test]
    fn simulators_match_their_exponent_measures() {
        let specs = [
            BivEvSpec::HuslerReiss { lambda: 0.8 },
            BivEvSpec::AsymmetricLogistic { r: 0.4, t1: 0.6 },
        ];
        for spec in specs {
            let (y1, y2) = simulate_biv_ev(&spec, 40000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            let m = spec.pair_model();
            for &(a, b) in &[(1.0, 1.0), (0.7, 3.0), (4.0, 1.5)] {
                let emp = y1.iter().zip(&y2).filter(|(u, v)| **u <= a && **v <= b).count() as f64 / 40000.0;
                let exact = m.joint_cdf(a, b);
                let se = (exact * (1.0 - exact) / 40000.0).sqrt();
                assert!((emp - exact).abs() < 4.0 * se, "{spec:?} ({a},{b}): {emp} vs {exact}");
            }
        }
    }

    #[test]
    fn logistic_fit_recovers_dependence() {
        let (y1, y2) =
            simulate_biv_ev(&BivEvSpec::Logistic { r: 0.5 }, 1000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let fit = fit_biv_ev(&y1, &y2, BivEvFamily::Logistic).unwrap();
        let DependenceSpec::Bivariate(BivEvSpec::Logistic { r }) = fit.spec else { panic!() };
        assert!((r / 0.5 - 1.0).abs() < 0.1, "{r}");
        assert!(!fit.at_boundary);
    }

    #[test]
    fn independent_pair_pushes_logistic_to_boundary() {
        let (y1, y2) =
            simulate_biv_ev(&BivEvSpec::Logistic { r: 1.0 }, 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let fit = fit_biv_ev(&y1, &y2, BivEvFamily::Logistic).unwrap();
        let DependenceSpec::Bivariate(BivEvSpec::Logistic { r }) = fit.spec else { panic!() };
        assert!(r > 0.95, "{r}");
    }

    #[test]
    fn husler_reiss_small_lambda_is_nearly_comonotone() {
        let (y1, y2) = simulate_biv_ev(
            &BivEvSpec::HuslerReiss { lambda: 1e-4 },
            500,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a / b - 1.0).abs() < 1e-2);
        }
    }
}
