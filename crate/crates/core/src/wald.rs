//! Wald statistics for homogeneity of a set of locations.
//!
//! Two null hypotheses are supported: equal distributions (all four
//! parameters coincide across the set) and local scaling (the ratios
//! `mu/sigma` and `alpha/mu` and the shape coincide, so locations differ
//! only by a positive scaling factor).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gev::ScaleGevParams;
use crate::linalg;
use crate::uncertainty::ParamCovariance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    /// Equal distributions.
    #[default]
    Ed,
    /// Local scaling.
    Ls,
}

impl StatisticKind {
    /// Number of constraints contributed by each consecutive pair.
    pub fn constraints_per_pair(self) -> usize {
        match self {
            StatisticKind::Ed => 4,
            StatisticKind::Ls => 3,
        }
    }
}

/// A set of at least two distinct locations, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HypothesisSet {
    locations: Vec<usize>,
    pub kind: StatisticKind,
}

impl HypothesisSet {
    pub fn new(mut locations: Vec<usize>, kind: StatisticKind) -> Result<Self> {
        locations.sort_unstable();
        if locations.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a hypothesis needs at least two locations, got {locations:?}"
            )));
        }
        if locations.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "hypothesis locations must be distinct, got {locations:?}"
            )));
        }
        Ok(Self { locations, kind })
    }

    pub fn locations(&self) -> &[usize] {
        &self.locations
    }

    pub fn k(&self) -> usize {
        self.locations.len()
    }

    pub fn df(&self) -> usize {
        self.kind.constraints_per_pair() * (self.k() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub asymptotic_p: f64,
    /// The middle matrix was inverted with the pseudo-inverse fallback.
    pub pseudo_inverse: bool,
}

/// Successive parameter differences `theta_{a_i} - theta_{a_{i+1}}` along `order`.
pub fn h_of_theta(thetas: &[ScaleGevParams], order: &[usize]) -> DVector<f64> {
    let k = order.len();
    let mut h = DVector::zeros(4 * k.saturating_sub(1));
    for i in 0..k.saturating_sub(1) {
        let a = thetas[order[i]].to_array();
        let b = thetas[order[i + 1]].to_array();
        for p in 0..4 {
            h[4 * i + p] = a[p] - b[p];
        }
    }
    h
}

/// Constant Jacobian of [`h_of_theta`] with respect to all `4 * d` parameters.
pub fn jacobian_h(order: &[usize], d: usize) -> DMatrix<f64> {
    let k = order.len();
    let mut m = DMatrix::zeros(4 * k.saturating_sub(1), 4 * d);
    for i in 0..k.saturating_sub(1) {
        for p in 0..4 {
            m[(4 * i + p, 4 * order[i] + p)] = 1.0;
            m[(4 * i + p, 4 * order[i + 1] + p)] = -1.0;
        }
    }
    m
}

fn ls_components(t: &ScaleGevParams) -> [f64; 3] {
    [t.mu / t.sigma, t.gamma, t.alpha / t.mu]
}

/// Successive differences of `(mu/sigma, gamma, alpha/mu)` along `order`.
pub fn g_of_theta_ls(thetas: &[ScaleGevParams], order: &[usize]) -> DVector<f64> {
    let k = order.len();
    let mut g = DVector::zeros(3 * k.saturating_sub(1));
    for i in 0..k.saturating_sub(1) {
        let a = ls_components(&thetas[order[i]]);
        let b = ls_components(&thetas[order[i + 1]]);
        for p in 0..3 {
            g[3 * i + p] = a[p] - b[p];
        }
    }
    g
}

/// Jacobian of `(mu/sigma, gamma, alpha/mu)` with respect to `(mu, sigma, gamma, alpha)`.
fn ls_component_jacobian(t: &ScaleGevParams) -> [[f64; 4]; 3] {
    [
        [1.0 / t.sigma, -t.mu / (t.sigma * t.sigma), 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-t.alpha / (t.mu * t.mu), 0.0, 0.0, 1.0 / t.mu],
    ]
}

/// Analytic Jacobian of [`g_of_theta_ls`] with respect to all `4 * d` parameters.
pub fn jacobian_g_ls(thetas: &[ScaleGevParams], order: &[usize]) -> DMatrix<f64> {
    let k = order.len();
    let d = thetas.len();
    let mut m = DMatrix::zeros(3 * k.saturating_sub(1), 4 * d);
    for i in 0..k.saturating_sub(1) {
        let ja = ls_component_jacobian(&thetas[order[i]]);
        let jb = ls_component_jacobian(&thetas[order[i + 1]]);
        for r in 0..3 {
            for p in 0..4 {
                m[(3 * i + r, 4 * order[i] + p)] += ja[r][p];
                m[(3 * i + r, 4 * order[i + 1] + p)] -= jb[r][p];
            }
        }
    }
    m
}

/// Upper tail `P(X > x)` of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_upper_tail(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    if x.is_nan() {
        return Err(Error::Domain("chi-square tail of NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sf(x))
}

/// Wald statistic with the constraint chain taken in the given `order`.
///
/// `sigma` covers all locations indexed by `thetas`; `n` is the series length.
pub fn wald_statistic_ordered(
    thetas: &[ScaleGevParams],
    sigma: &ParamCovariance,
    order: &[usize],
    n: usize,
    kind: StatisticKind,
) -> Result<WaldResult> {
    let d = thetas.len();
    if sigma.n_locations() != d {
        return Err(Error::InvalidInput(format!(
            "covariance covers {} locations but {d} parameter vectors were given",
            sigma.n_locations()
        )));
    }
    crate::panel::validate_locations(order, d)?;
    if order.len() < 2 {
        return Err(Error::InvalidInput("a Wald test needs at least two locations".into()));
    }
    let test_err = |reason: String| {
        let mut set = order.to_vec();
        set.sort_unstable();
        Error::Test { set, reason }
    };

    let (h, jac) = match kind {
        StatisticKind::Ed => (h_of_theta(thetas, order), jacobian_h(order, d)),
        StatisticKind::Ls => {
            if order.iter().any(|&i| !(thetas[i].mu > 0.0 && thetas[i].sigma > 0.0)) {
                return Err(test_err("local scaling needs positive mu and sigma".into()));
            }
            (g_of_theta_ls(thetas, order), jacobian_g_ls(thetas, order))
        }
    };
    let df = h.len();
    if h.iter().all(|&v| v == 0.0) {
        // the quadratic form vanishes whatever the middle matrix
        return Ok(WaldResult {
            statistic: 0.0,
            df,
            asymptotic_p: 1.0,
            pseudo_inverse: false,
        });
    }
    let middle = &jac * sigma.matrix() * jac.transpose();
    let inv = linalg::sym_inverse(&middle)
        .ok_or_else(|| test_err("middle matrix is zero or not finite".into()))?;
    let q = (h.transpose() * &inv.inverse * &h)[(0, 0)];
    if !q.is_finite() {
        return Err(test_err("statistic is not finite".into()));
    }
    let statistic = (n as f64 * q).max(0.0);
    Ok(WaldResult {
        statistic,
        df,
        asymptotic_p: chi_square_upper_tail(statistic, df)?,
        pseudo_inverse: inv.pseudo,
    })
}

/// Equal-distribution statistic for the sorted set `a`.
pub fn wald_statistic_ed(
    thetas: &[ScaleGevParams],
    sigma: &ParamCovariance,
    a: &HypothesisSet,
    n: usize,
) -> Result<WaldResult> {
    wald_statistic_ordered(thetas, sigma, a.locations(), n, StatisticKind::Ed)
}

/// Local-scaling statistic for the sorted set `a`.
pub fn wald_statistic_ls(
    thetas: &[ScaleGevParams],
    sigma: &ParamCovariance,
    a: &HypothesisSet,
    n: usize,
) -> Result<WaldResult> {
    wald_statistic_ordered(thetas, sigma, a.locations(), n, StatisticKind::Ls)
}

/// Statistic of the kind recorded in `a`.
pub fn wald_statistic(
    thetas: &[ScaleGevParams],
    sigma: &ParamCovariance,
    a: &HypothesisSet,
    n: usize,
) -> Result<WaldResult> {
    wald_statistic_ordered(thetas, sigma, a.locations(), n, a.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn th(mu: f64, sigma: f64, gamma: f64, alpha: f64) -> ScaleGevParams {
        ScaleGevParams::new(mu, sigma, gamma, alpha).unwrap()
    }

    #[test]
    fn h_is_zero_for_identical_parameters() {
        let t = vec![th(20.0, 5.0, 0.1, 1.0); 3];
        assert!(h_of_theta(&t, &[0, 1, 2]).iter().all(|&v| v == 0.0));
        let t2 = vec![th(21.0, 5.0, 0.1, 1.0), th(20.0, 5.0, 0.1, 1.0)];
        assert_eq!(h_of_theta(&t2, &[0, 1]).as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn jacobian_rows_are_differences() {
        let j = jacobian_h(&[0, 2, 3], 5);
        assert_eq!(j.nrows(), 8);
        for r in 0..j.nrows() {
            let row: Vec<f64> = j.row(r).iter().copied().filter(|&v| v != 0.0).collect();
            assert_eq!(row, vec![1.0, -1.0]);
        }
    }

    #[test]
    fn direct_matrix_arithmetic() {
        let t = vec![th(20.1, 5.0, 0.1, 1.0), th(20.0, 5.0, 0.1, 1.0)];
        let sigma = ParamCovariance::from_matrix(DMatrix::identity(8, 8), 100).unwrap();
        let a = HypothesisSet::new(vec![0, 1], StatisticKind::Ed).unwrap();
        let r = wald_statistic_ed(&t, &sigma, &a, 100).unwrap();
        assert_relative_eq!(r.statistic, 0.5, epsilon = 1e-10);
        assert_eq!(r.df, 4);
    }

    #[test]
    fn identical_parameters_give_zero_statistic() {
        let t = vec![th(20.0, 5.0, 0.1, 1.0); 2];
        let sigma = ParamCovariance::from_matrix(DMatrix::identity(8, 8), 50).unwrap();
        let a = HypothesisSet::new(vec![1, 0], StatisticKind::Ed).unwrap();
        let r = wald_statistic_ed(&t, &sigma, &a, 50).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.asymptotic_p, 1.0);
    }

    #[test]
    fn local_scaling_family_gives_zero() {
        let base = th(20.0, 5.5, 0.1, 1.5);
        let t: Vec<_> = [1.0, 0.7, 2.3]
            .iter()
            .map(|&c| th(c * base.mu, c * base.sigma, base.gamma, c * base.alpha))
            .collect();
        let g = g_of_theta_ls(&t, &[0, 1, 2]);
        assert!(g.iter().all(|v| v.abs() < 1e-14), "{g:?}");
        let t2 = vec![th(20.0, 5.0, 0.1, 1.0), th(20.0, 5.0, 0.3, 1.0)];
        let g2 = g_of_theta_ls(&t2, &[0, 1]);
        assert_relative_eq!(g2[1], -0.2, epsilon = 1e-15);
        assert_eq!((g2[0], g2[2]), (0.0, 0.0));
    }

    #[test]
    fn ls_jacobian_matches_finite_differences() {
        let t = vec![th(20.0, 5.5, 0.1, 1.5), th(18.0, 4.0, -0.2, -0.7), th(30.0, 9.0, 0.3, 2.0)];
        let order = [0, 1, 2];
        let jac = jacobian_g_ls(&t, &order);
        for loc in 0..3 {
            for p in 0..4 {
                let h = 1e-6 * t[loc].to_array()[p].abs().max(1.0);
                let bump = |s: f64| {
                    let mut tt = t.clone();
                    let mut arr = tt[loc].to_array();
                    arr[p] += s;
                    tt[loc] = ScaleGevParams::from_slice(&arr);
                    g_of_theta_ls(&tt, &order)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                for r in 0..fd.len() {
                    let a = jac[(r, 4 * loc + p)];
                    assert!((a - fd[r]).abs() <= 1e-6 * a.abs().max(1e-3), "{a} vs {}", fd[r]);
                }
            }
        }
    }

    #[test]
    fn chi_square_tail_values() {
        assert_eq!(chi_square_upper_tail(0.0, 3).unwrap(), 1.0);
        assert_relative_eq!(
            chi_square_upper_tail(2.0 * 2f64.ln(), 2).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(chi_square_upper_tail(1.0, 0).is_err());
    }

    #[test]
    fn chi_square_tail_matches_quadrature_oracle() {
        // P(X > 7.779) for df = 4: integrate the density x/4 exp(-x/2) on [0, x] by Simpson's rule.
        let x = 7.779;
        let m = 20000;
        let h = x / m as f64;
        let dens = |v: f64| v / 4.0 * (-v / 2.0).exp();
        let mut s = dens(0.0) + dens(x);
        for i in 1..m {
            s += dens(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = 1.0 - s * h / 3.0;
        let p = chi_square_upper_tail(x, 4).unwrap();
        assert_relative_eq!(p, oracle, epsilon = 1e-10);
        assert!((p - 0.1).abs() < 1e-3);
    }

    #[test]
    fn hypothesis_set_validation() {
        assert!(HypothesisSet::new(vec![1], StatisticKind::Ed).is_err());
        assert!(HypothesisSet::new(vec![1, 1], StatisticKind::Ed).is_err());
        let a = HypothesisSet::new(vec![3, 1, 2], StatisticKind::Ls).unwrap();
        assert_eq!(a.locations(), &[1, 2, 3]);
        assert_eq!(a.df(), 6);
    }
}
