//! GEV distribution primitives and the scale-GEV temporal model.
//!
//! The scale-GEV model lets location and scale share an exponential trend in a
//! scalar covariate `c`:
//!
//! ```text
//! mu(c)    = mu    * exp(alpha * c / mu)
//! sigma(c) = sigma * exp(alpha * c / mu)
//! ```
//!
//! with a constant shape `gamma`. Derivatives with respect to
//! `(mu, sigma, gamma, alpha)` are assembled from the derivatives of the
//! standard `GEV(0, 1, gamma)` log density via the chain rule.

use nalgebra::{Matrix3, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude of the shape parameter all formulas use their Gumbel limits.
pub const GUMBEL_EPS: f64 = 1e-6;

/// Lower floor applied by [`to_frechet`] when the positive part vanishes.
pub const FRECHET_FLOOR: f64 = 1e-10;

/// `|gamma * z|` below which the shape derivatives switch to power series.
const SERIES_CUTOFF: f64 = 0.05;
const SERIES_TERMS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(mu.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "GEV parameters must be finite (mu = {mu}, gamma = {gamma})"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "GEV scale must be positive, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma, gamma })
    }

    /// Lower (gamma > 0) or upper (gamma < 0) support endpoint; `None` for Gumbel.
    pub fn endpoint(&self) -> Option<f64> {
        if self.gamma.abs() < GUMBEL_EPS {
            None
        } else {
            Some(self.mu - self.sigma / self.gamma)
        }
    }
}

/// Parameters `(mu, sigma, gamma, alpha)` of the scale-GEV model at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleGevParams {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl ScaleGevParams {
    pub fn new(mu: f64, sigma: f64, gamma: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            gamma,
            alpha,
        };
        if !p.is_valid() {
            return Err(Error::InvalidInput(format!(
                "scale-GEV parameters require mu > 0, sigma > 0 and finite values, got {p:?}"
            )));
        }
        Ok(p)
    }

    pub fn is_valid(&self) -> bool {
        self.mu > 0.0
            && self.sigma > 0.0
            && self.mu.is_finite()
            && self.sigma.is_finite()
            && self.gamma.is_finite()
            && self.alpha.is_finite()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.mu, self.sigma, self.gamma, self.alpha]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            mu: v[0],
            sigma: v[1],
            gamma: v[2],
            alpha: v[3],
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.mu, self.sigma, self.gamma, self.alpha)
    }

    /// Multiplier `exp(alpha * c / mu)` shared by location and scale.
    #[inline]
    pub fn trend_factor(&self, c: f64) -> f64 {
        (self.alpha * c / self.mu).exp()
    }

    /// GEV parameters in the climate described by covariate value `c`.
    #[inline]
    pub fn effective(&self, c: f64) -> GevParams {
        let e = self.trend_factor(c);
        GevParams {
            mu: self.mu * e,
            sigma: self.sigma * e,
            gamma: self.gamma,
        }
    }
}

/// Cumulative distribution function of `GEV(mu, sigma, gamma)`.
pub fn gev_cdf(x: f64, p: &GevParams) -> f64 {
    let z = (x - p.mu) / p.sigma;
    if p.gamma.abs() < GUMBEL_EPS {
        return (-(-z).exp()).exp();
    }
    let t = 1.0 + p.gamma * z;
    if t <= 0.0 {
        return if p.gamma > 0.0 { 0.0 } else { 1.0 };
    }
    let u = (-(p.gamma * z).ln_1p() / p.gamma).exp();
    (-u).exp()
}

pub fn gev_quantile(q: f64, p: &GevParams) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!(
            "quantile level must lie in (0, 1), got {q}"
        )));
    }
    let y = -q.ln();
    if p.gamma.abs() < GUMBEL_EPS {
        return Ok(p.mu - p.sigma * y.ln());
    }
    Ok(p.mu + p.sigma * (-p.gamma * y.ln()).exp_m1() / p.gamma)
}

/// Log density of `GEV(mu, sigma, gamma)`; `-inf` outside the support.
pub fn gev_log_density(x: f64, p: &GevParams) -> f64 {
    let z = (x - p.mu) / p.sigma;
    match standard_log_density(z, p.gamma) {
        Some(f) => f - p.sigma.ln(),
        None => f64::NEG_INFINITY,
    }
}

/// Log density of the standard `GEV(0, 1, gamma)` law at `z`.
#[inline]
pub fn standard_log_density(z: f64, gamma: f64) -> Option<f64> {
    let g = if gamma.abs() < GUMBEL_EPS { 0.0 } else { gamma };
    let t = 1.0 + g * z;
    if t <= 0.0 {
        return None;
    }
    let log_u = log_u(z, g);
    Some(-log_u.exp() + (g + 1.0) * log_u)
}

/// `log u = -log(1 + gamma z) / gamma`, `-z` in the Gumbel case.
#[inline]
fn log_u(z: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        -z
    } else {
        -(gamma * z).ln_1p() / gamma
    }
}

/// `(L, dL/dgamma, d2L/dgamma2)` at fixed `z`, with `L = log u`.
fn log_u_shape_terms(z: f64, gamma: f64) -> (f64, f64, f64) {
    let gz = gamma * z;
    if gz.abs() < SERIES_CUTOFF {
        // L = sum_{k>=1} (-1)^k gamma^(k-1) z^k / k and its gamma-derivatives.
        let mut l = 0.0;
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut zk = 1.0;
        for k in 1..=SERIES_TERMS {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            zk *= z;
            l += sign * gamma.powi(k as i32 - 1) * zk / kf;
            if k >= 2 {
                l1 += sign * (kf - 1.0) / kf * gamma.powi(k as i32 - 2) * zk;
            }
            if k >= 3 {
                l2 += sign * (kf - 1.0) * (kf - 2.0) / kf * gamma.powi(k as i32 - 3) * zk;
            }
        }
        (l, l1, l2)
    } else {
        let t = 1.0 + gz;
        let lt = gz.ln_1p();
        let g2 = gamma * gamma;
        let l = -lt / gamma;
        let l1 = lt / g2 - z / (gamma * t);
        let l2 = 2.0 * z / (g2 * t) - 2.0 * lt / (g2 * gamma) + z * z / (gamma * t * t);
        (l, l1, l2)
    }
}

/// Partial derivatives of the standard GEV log density `f(z, gamma)`.
#[derive(Debug, Clone, Copy)]
struct StandardTerms {
    f_z: f64,
    f_zz: f64,
    f_g: f64,
    f_gg: f64,
    f_zg: f64,
}

fn standard_terms(z: f64, gamma: f64) -> Option<StandardTerms> {
    let g = if gamma.abs() < GUMBEL_EPS { 0.0 } else { gamma };
    let t = 1.0 + g * z;
    if t <= 0.0 || !t.is_finite() {
        return None;
    }
    let (l, l1, l2) = log_u_shape_terms(z, g);
    let u = l.exp();
    let f_z = (u - g - 1.0) / t;
    let f_zz = (1.0 + g) * (g - u) / (t * t);
    let f_g = (g + 1.0 - u) * l1 + l;
    let f_zg = (u * l1 - 1.0) / t - (u - g - 1.0) * z / (t * t);
    let f_gg = (2.0 - u * l1) * l1 + (g + 1.0 - u) * l2;
    Some(StandardTerms {
        f_z,
        f_zz,
        f_g,
        f_gg,
        f_zg,
    })
}

/// Gradient of `(mu, sigma, gamma) -> log g_(mu,sigma,gamma)(x)` at `(0, 1, gamma)`, `x = z`.
pub fn standard_score(z: f64, gamma: f64) -> Option<Vector3<f64>> {
    let s = standard_terms(z, gamma)?;
    Some(Vector3::new(-s.f_z, -z * s.f_z - 1.0, s.f_g))
}

/// Hessian of `(mu, sigma, gamma) -> log g_(mu,sigma,gamma)(x)` at `(0, 1, gamma)`, `x = z`.
pub fn standard_hessian(z: f64, gamma: f64) -> Option<Matrix3<f64>> {
    let s = standard_terms(z, gamma)?;
    let mm = s.f_zz;
    let ms = s.f_z + z * s.f_zz;
    let ss = 2.0 * z * s.f_z + z * z * s.f_zz + 1.0;
    let mg = -s.f_zg;
    let sg = -z * s.f_zg;
    let gg = s.f_gg;
    Some(Matrix3::new(mm, ms, mg, ms, ss, sg, mg, sg, gg))
}

/// Standardized residual `(x - mu(c)) / sigma(c)`.
#[inline]
pub fn standardize(x: f64, c: f64, theta: &ScaleGevParams) -> f64 {
    let p = theta.effective(c);
    (x - p.mu) / p.sigma
}

/// Log density of one observation `x` with covariate `c` under the scale-GEV model.
pub fn scale_gev_log_density(x: f64, c: f64, theta: &ScaleGevParams) -> f64 {
    gev_log_density(x, &theta.effective(c))
}

/// Transpose of the Jacobian of `theta -> (mu(c), sigma(c), gamma)`; rows index
/// `(mu, sigma, gamma, alpha)`, columns index `(mu(c), sigma(c), gamma)`.
pub fn chain_matrix(c: f64, theta: &ScaleGevParams) -> Matrix4x3<f64> {
    let (mu, sigma, alpha) = (theta.mu, theta.sigma, theta.alpha);
    let e = theta.trend_factor(c);
    let r = alpha * c / mu;
    Matrix4x3::new(
        (1.0 - r) * e,
        -sigma * r / mu * e,
        0.0,
        0.0,
        e,
        0.0,
        0.0,
        0.0,
        1.0,
        c * e,
        sigma * c / mu * e,
        0.0,
    )
}

/// Second derivatives of `mu(c)` and `sigma(c)` with respect to `theta`.
fn effective_second_derivatives(c: f64, theta: &ScaleGevParams) -> (Matrix4<f64>, Matrix4<f64>) {
    let (mu, sigma) = (theta.mu, theta.sigma);
    let e = theta.trend_factor(c);
    let r = theta.alpha * c / mu;

    let mut dmu = Matrix4::zeros();
    dmu[(0, 0)] = e * r * r / mu;
    dmu[(0, 3)] = -e * r * c / mu;
    dmu[(3, 0)] = dmu[(0, 3)];
    dmu[(3, 3)] = c * c * e / mu;

    let mut dsig = Matrix4::zeros();
    dsig[(0, 0)] = sigma * e * r * (r + 2.0) / (mu * mu);
    dsig[(0, 1)] = -r / mu * e;
    dsig[(1, 0)] = dsig[(0, 1)];
    dsig[(0, 3)] = -sigma * c / (mu * mu) * e * (1.0 + r);
    dsig[(3, 0)] = dsig[(0, 3)];
    dsig[(1, 3)] = c / mu * e;
    dsig[(3, 1)] = dsig[(1, 3)];
    dsig[(3, 3)] = sigma * (c / mu).powi(2) * e;
    (dmu, dsig)
}

fn support_error(x: f64, c: f64, theta: &ScaleGevParams) -> Error {
    Error::Domain(format!(
        "observation {x} (covariate {c}) is not strictly inside the support of {theta:?}"
    ))
}

/// Analytic gradient of the log density with respect to `(mu, sigma, gamma, alpha)`.
pub fn score(x: f64, c: f64, theta: &ScaleGevParams) -> Result<Vector4<f64>> {
    let eff = theta.effective(c);
    let z = (x - eff.mu) / eff.sigma;
    let std = standard_score(z, theta.gamma).ok_or_else(|| support_error(x, c, theta))?;
    let grad_eff = Vector3::new(std[0] / eff.sigma, std[1] / eff.sigma, std[2]);
    Ok(chain_matrix(c, theta) * grad_eff)
}

/// Analytic Hessian of the log density with respect to `(mu, sigma, gamma, alpha)`.
pub fn hessian(x: f64, c: f64, theta: &ScaleGevParams) -> Result<Matrix4<f64>> {
    let eff = theta.effective(c);
    let z = (x - eff.mu) / eff.sigma;
    let err = || support_error(x, c, theta);
    let std_grad = standard_score(z, theta.gamma).ok_or_else(err)?;
    let std_hess = standard_hessian(z, theta.gamma).ok_or_else(err)?;

    let t_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / eff.sigma, 1.0 / eff.sigma, 1.0));
    let grad_eff = t_inv * std_grad;
    let hess_eff = t_inv * std_hess * t_inv;

    let b = chain_matrix(c, theta);
    let (dmu, dsig) = effective_second_derivatives(c, theta);
    let h = dmu * grad_eff[0] + dsig * grad_eff[1] + b * hess_eff * b.transpose();
    Ok((h + h.transpose()) * 0.5)
}

/// Log density and its gradient in one pass; `None` outside the support.
#[inline]
pub(crate) fn log_density_and_score(
    x: f64,
    c: f64,
    theta: &ScaleGevParams,
) -> Option<(f64, Vector4<f64>)> {
    let eff = theta.effective(c);
    let z = (x - eff.mu) / eff.sigma;
    let g = if theta.gamma.abs() < GUMBEL_EPS { 0.0 } else { theta.gamma };
    let t = 1.0 + g * z;
    if t <= 0.0 {
        return None;
    }
    let (l, l1, _) = if (g * z).abs() < SERIES_CUTOFF {
        log_u_shape_terms(z, g)
    } else {
        let lt = (g * z).ln_1p();
        (-lt / g, lt / (g * g) - z / (g * t), 0.0)
    };
    let u = l.exp();
    let value = -u + (g + 1.0) * l - eff.sigma.ln();
    let f_z = (u - g - 1.0) / t;
    let f_g = (g + 1.0 - u) * l1 + l;
    let grad_eff = Vector3::new(-f_z / eff.sigma, (-z * f_z - 1.0) / eff.sigma, f_g);
    Some((value, chain_matrix(c, theta) * grad_eff))
}

/// Maps observations to approximately unit-Fréchet margins.
///
/// Returns `{1 + gamma (M - mu(t)) / sigma(t)}_+^(1/gamma)`, floored at
/// [`FRECHET_FLOOR`]. Points above a finite upper endpoint map to `1 / FRECHET_FLOOR`.
pub fn to_frechet(series: &[f64], theta: &ScaleGevParams, covariate: &[f64]) -> Vec<f64> {
    series
        .iter()
        .zip(covariate)
        .map(|(&m, &c)| frechet_value(m, c, theta))
        .collect()
}

#[inline]
fn frechet_value(m: f64, c: f64, theta: &ScaleGevParams) -> f64 {
    let eff = theta.effective(c);
    let z = (m - eff.mu) / eff.sigma;
    let g = theta.gamma;
    let y = if g.abs() < GUMBEL_EPS {
        z.exp()
    } else {
        let t = 1.0 + g * z;
        if t <= 0.0 {
            return if g > 0.0 {
                FRECHET_FLOOR
            } else {
                1.0 / FRECHET_FLOOR
            };
        }
        ((g * z).ln_1p() / g).exp()
    };
    y.clamp(FRECHET_FLOOR, 1.0 / FRECHET_FLOOR)
}

/// Inverse of [`to_frechet`]: maps unit-Fréchet values back to scale-GEV margins.
pub fn from_frechet(y: &[f64], theta: &ScaleGevParams, covariate: &[f64]) -> Result<Vec<f64>> {
    if y.len() != covariate.len() {
        return Err(Error::InvalidInput(format!(
            "{} Fréchet values but {} covariate values",
            y.len(),
            covariate.len()
        )));
    }
    y.iter()
        .zip(covariate)
        .map(|(&v, &c)| from_frechet_value(v, c, theta))
        .collect()
}

/// [`from_frechet`] with the covariate held at a single reference value.
pub fn from_frechet_at(y: &[f64], theta: &ScaleGevParams, c: f64) -> Result<Vec<f64>> {
    y.iter().map(|&v| from_frechet_value(v, c, theta)).collect()
}

#[inline]
pub(crate) fn from_frechet_value(y: f64, c: f64, theta: &ScaleGevParams) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!(
            "Fréchet values must be positive, got {y}"
        )));
    }
    let eff = theta.effective(c);
    let g = theta.gamma;
    let w = if g.abs() < GUMBEL_EPS {
        y.ln()
    } else {
        (g * y.ln()).exp_m1() / g
    };
    Ok(eff.mu + eff.sigma * w)
}
