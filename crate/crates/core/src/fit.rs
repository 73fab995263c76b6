//! Maximum-likelihood fitting of the scale-GEV model, per location and pooled.
//!
//! Optimization runs on the natural parameters `(mu, sigma, gamma, alpha)`. A
//! simplex search from probability-weighted-moment starting values is refined
//! by BFGS with the analytic score. The shape is kept above `-1/2` by a soft
//! barrier that switches on below [`BARRIER_START`].

use nalgebra::{DMatrix, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::gev::{self, ScaleGevParams};
use crate::optim::{self, BfgsOptions, NelderMeadOptions};
use crate::panel::{self, BlockMaximaPanel, CovariateSeries};

/// Shortest series accepted for fitting four parameters.
pub const MIN_SERIES_LEN: usize = 20;

/// Shape values at or below this bound are infeasible.
pub const SHAPE_LOWER_BOUND: f64 = -0.5;
/// The barrier penalty is zero above this shape value.
pub const BARRIER_START: f64 = -0.45;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Warm start; when feasible the simplex stage is skipped.
    pub start: Option<ScaleGevParams>,
    pub nelder_mead: NelderMeadOptions,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            start: None,
            nelder_mead: NelderMeadOptions {
                max_evals: 1500,
                f_tol: 1e-9,
                x_tol: 1e-6,
            },
            bfgs: BfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ScaleGevParams,
    /// Total negative log-likelihood at the estimate.
    pub neg_log_lik: f64,
    /// Numerically differentiated Hessian of the *mean* log-likelihood at the estimate.
    pub hessian: Matrix4<f64>,
    pub converged: bool,
    pub evaluations: usize,
    /// Final scaled gradient sup-norm of the mean objective.
    pub gradient_norm: f64,
    pub n_obs: usize,
}

/// Observations `(x, c)` entering one likelihood.
struct Sample<'a> {
    columns: Vec<&'a [f64]>,
    covariate: &'a [f64],
}

impl Sample<'_> {
    fn len(&self) -> usize {
        self.columns.len() * self.covariate.len()
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.columns
            .iter()
            .flat_map(move |col| col.iter().copied().zip(self.covariate.iter().copied()))
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.columns.iter().flat_map(|c| c.iter().copied())
    }
}

fn barrier(gamma: f64) -> (f64, f64) {
    if gamma >= BARRIER_START {
        return (0.0, 0.0);
    }
    if gamma <= SHAPE_LOWER_BOUND {
        return (f64::INFINITY, 0.0);
    }
    let d = gamma - SHAPE_LOWER_BOUND;
    let u = (BARRIER_START - gamma) / d;
    let du = (SHAPE_LOWER_BOUND - BARRIER_START) / (d * d);
    (u * u, 2.0 * u * du)
}

/// Sum of log densities; `-inf` if any observation leaves the support.
pub fn log_likelihood(series: &[f64], covariate: &[f64], theta: &ScaleGevParams) -> f64 {
    series
        .iter()
        .zip(covariate)
        .map(|(&x, &c)| gev::scale_gev_log_density(x, c, theta))
        .sum()
}

fn mean_nll(sample: &Sample, x: &[f64]) -> f64 {
    let theta = ScaleGevParams::from_slice(x);
    if !theta.is_valid() {
        return f64::INFINITY;
    }
    let (b, _) = barrier(theta.gamma);
    if !b.is_finite() {
        return f64::INFINITY;
    }
    let mut ll = 0.0;
    for (xi, ci) in sample.iter() {
        let v = gev::scale_gev_log_density(xi, ci, &theta);
        if v == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        ll += v;
    }
    -ll / sample.len() as f64 + b
}

fn mean_nll_and_grad(sample: &Sample, x: &[f64]) -> (f64, Vec<f64>) {
    let theta = ScaleGevParams::from_slice(x);
    let inf = (f64::INFINITY, vec![0.0; 4]);
    if !theta.is_valid() {
        return inf;
    }
    let (b, db) = barrier(theta.gamma);
    if !b.is_finite() {
        return inf;
    }
    let mut ll = 0.0;
    let mut g = Vector4::zeros();
    for (xi, ci) in sample.iter() {
        match gev::log_density_and_score(xi, ci, &theta) {
            Some((v, s)) => {
                ll += v;
                g += s;
            }
            None => return inf,
        }
    }
    let n = sample.len() as f64;
    let mut grad: Vec<f64> = g.iter().map(|v| -v / n).collect();
    grad[2] += db;
    (-ll / n + b, grad)
}

fn mean_score(sample: &Sample, x: &[f64]) -> Vec<f64> {
    let theta = ScaleGevParams::from_slice(x);
    let mut g = Vector4::zeros();
    for (xi, ci) in sample.iter() {
        match gev::log_density_and_score(xi, ci, &theta) {
            Some((_, s)) => g += s,
            None => return vec![f64::NAN; 4],
        }
    }
    let n = sample.len() as f64;
    g.iter().map(|v| v / n).collect()
}

/// Stationary GEV starting values from probability-weighted moments.
pub(crate) fn pwm_start(values: &[f64]) -> (f64, f64, f64) {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let i = i as f64;
        b0 += v;
        b1 += v * i / (n - 1.0);
        b2 += v * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;

    let gumbel = |b0: f64, b1: f64| {
        let sigma = (2.0 * b1 - b0) / std::f64::consts::LN_2;
        (b0 - 0.577_215_664_901_532_9 * sigma, sigma, 0.0)
    };
    let denom = 3.0 * b2 - b0;
    if denom.abs() < f64::EPSILON * b0.abs().max(1.0) {
        return gumbel(b0, b1);
    }
    let c = (2.0 * b1 - b0) / denom - std::f64::consts::LN_2 / 3f64.ln();
    let k = (7.8590 * c + 2.9554 * c * c).clamp(-0.45, 0.45);
    if k.abs() < 1e-6 {
        return gumbel(b0, b1);
    }
    let g1k = gamma_fn(1.0 + k);
    let sigma = (2.0 * b1 - b0) * k / (g1k * (1.0 - 2f64.powf(-k)));
    let mu = b0 + sigma * (g1k - 1.0) / k;
    if !(sigma > 0.0 && mu.is_finite()) {
        return gumbel(b0, b1);
    }
    (mu, sigma, -k)
}

fn feasible(sample: &Sample, theta: &ScaleGevParams) -> bool {
    mean_nll(sample, &theta.to_array()).is_finite()
}

fn initial_params(sample: &Sample) -> Result<ScaleGevParams> {
    let values: Vec<f64> = sample.values().collect();
    let (mu, mut sigma, gamma) = pwm_start(&values);
    if !(sigma > 0.0) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        sigma = var.sqrt() * 6f64.sqrt() / std::f64::consts::PI;
    }
    let mu = if mu > 0.0 { mu } else { sigma };
    let mut theta = ScaleGevParams {
        mu,
        sigma,
        gamma,
        alpha: 0.0,
    };
    for _ in 0..40 {
        if feasible(sample, &theta) {
            return Ok(theta);
        }
        theta.gamma *= 0.5;
    }
    theta.gamma = 0.0;
    if feasible(sample, &theta) {
        Ok(theta)
    } else {
        Err(Error::Fit(format!(
            "could not find a feasible starting point (pwm start mu = {mu}, sigma = {sigma})"
        )))
    }
}

fn inverse_hessian_seed(sample: &Sample, x: &[f64]) -> Option<DMatrix<f64>> {
    let h = optim::hessian_from_gradient(|p| mean_nll_and_grad(sample, p).1, x);
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return None;
    }
    // Floor tiny or negative curvature so the seed stays positive definite.
    let floor = max * 1e-8;
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

fn check_series(series: &[f64], n_cov: usize) -> Result<()> {
    if series.len() != n_cov {
        return Err(Error::InvalidInput(format!(
            "series has {} values but covariate has {n_cov}",
            series.len()
        )));
    }
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::InvalidInput(format!(
            "series of length {} is shorter than the minimum {MIN_SERIES_LEN}",
            series.len()
        )));
    }
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("series contains non-finite value {v}")));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::DegenerateData(format!(
            "all {} values equal {first}",
            series.len()
        )));
    }
    Ok(())
}

fn fit_sample(sample: &Sample, opts: &FitOptions) -> Result<FitReport> {
    let mut evaluations = 0usize;

    let warm = opts.start.filter(|s| s.is_valid() && feasible(sample, s));
    let mut result = None;
    if let Some(start) = warm {
        let x0 = start.to_array();
        let h0 = inverse_hessian_seed(sample, &x0);
        let r = optim::bfgs(|p| mean_nll_and_grad(sample, p), &x0, h0, &opts.bfgs);
        evaluations += r.evals + 8;
        if r.converged {
            result = Some(r);
        }
    }

    let result = match result {
        Some(r) => r,
        None => {
            let start = initial_params(sample)?;
            let x0 = start.to_array();
            let cov_scale = sample.covariate.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            let alpha_step = if cov_scale > 0.0 {
                0.1 * start.sigma / cov_scale
            } else {
                0.1 * start.sigma
            };
            let step = [0.1 * start.sigma, 0.1 * start.sigma, 0.05, alpha_step];
            let nm = optim::nelder_mead(|p| mean_nll(sample, p), &x0, &step, &opts.nelder_mead);
            evaluations += nm.evals;
            let h0 = inverse_hessian_seed(sample, &nm.x);
            let r = optim::bfgs(|p| mean_nll_and_grad(sample, p), &nm.x, h0, &opts.bfgs);
            evaluations += r.evals + 8;
            if !r.converged {
                return Err(Error::Fit(format!(
                    "BFGS did not converge: scaled gradient norm {:.3e} at {:?} after {} evaluations (objective {:.6})",
                    r.grad_norm, r.x, evaluations, r.fx
                )));
            }
            r
        }
    };

    let params = ScaleGevParams::from_slice(&result.x);
    let n = sample.len();
    let h = optim::hessian_from_gradient(|p| mean_score(sample, p), &result.x);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(format!(
            "Hessian at the estimate {params:?} is not finite"
        )));
    }
    let hessian = Matrix4::from_iterator(h.iter().copied());
    let (b, _) = barrier(params.gamma);
    Ok(FitReport {
        params,
        neg_log_lik: (result.fx - b) * n as f64,
        hessian,
        converged: true,
        evaluations,
        gradient_norm: result.grad_norm,
        n_obs: n,
    })
}

/// Fits the scale-GEV model to one series.
pub fn fit_scale_gev(series: &[f64], covariate: &CovariateSeries) -> Result<FitReport> {
    fit_scale_gev_with(series, covariate.values(), &FitOptions::default())
}

pub fn fit_scale_gev_with(series: &[f64], covariate: &[f64], opts: &FitOptions) -> Result<FitReport> {
    check_series(series, covariate.len())?;
    fit_sample(
        &Sample {
            columns: vec![series],
            covariate,
        },
        opts,
    )
}

/// Fits one scale-GEV model to the concatenated sample of the locations in `locs`.
pub fn fit_pooled_scale_gev(panel: &BlockMaximaPanel, locs: &[usize]) -> Result<FitReport> {
    fit_pooled_with(panel, locs, &FitOptions::default())
}

pub fn fit_pooled_with(panel: &BlockMaximaPanel, locs: &[usize], opts: &FitOptions) -> Result<FitReport> {
    panel::validate_locations(locs, panel.n_locations())?;
    let columns: Vec<&[f64]> = locs.iter().map(|&d| panel.column(d)).collect();
    fit_columns(&columns, panel.covariate().values(), opts)
}

/// Pooled fit over raw columns sharing one covariate series.
pub fn fit_columns(columns: &[&[f64]], covariate: &[f64], opts: &FitOptions) -> Result<FitReport> {
    if columns.is_empty() {
        return Err(Error::InvalidInput("no columns to fit".into()));
    }
    for col in columns {
        if col.len() != covariate.len() {
            return Err(Error::InvalidInput(format!(
                "column has {} values but covariate has {}",
                col.len(),
                covariate.len()
            )));
        }
        if col.len() < MIN_SERIES_LEN {
            return Err(Error::InvalidInput(format!(
                "series of length {} is shorter than the minimum {MIN_SERIES_LEN}",
                col.len()
            )));
        }
    }
    let all: Vec<f64> = columns.iter().flat_map(|c| c.iter().copied()).collect();
    if all.iter().all(|&v| v == all[0]) {
        return Err(Error::DegenerateData(format!("all {} pooled values equal {}", all.len(), all[0])));
    }
    fit_sample(
        &Sample {
            columns: columns.to_vec(),
            covariate,
        },
        opts,
    )
}

/// Fits every column of a panel separately.
pub fn fit_all_locations(panel: &BlockMaximaPanel, opts: &FitOptions) -> Result<Vec<FitReport>> {
    (0..panel.n_locations())
        .map(|d| {
            fit_scale_gev_with(panel.column(d), panel.covariate().values(), opts)
                .map_err(|e| e.for_target(&[d]))
        })
        .collect()
}

/// Fit of the local-scaling null model: location `d` has parameters
/// `(mu_d, mu_d / delta, gamma, eta * mu_d)` with shared `delta`, `eta`, `gamma`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalScalingFit {
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub neg_log_lik: f64,
    pub evaluations: usize,
}

impl LocalScalingFit {
    /// Implied scale-GEV parameters, one per fitted column.
    pub fn location_params(&self) -> Vec<ScaleGevParams> {
        self.mu
            .iter()
            .map(|&m| ScaleGevParams {
                mu: m,
                sigma: m / self.delta,
                gamma: self.gamma,
                alpha: self.eta * m,
            })
            .collect()
    }
}

fn ls_params(x: &[f64]) -> Option<Vec<ScaleGevParams>> {
    let (delta, eta, gamma) = (x[0], x[1], x[2]);
    if !(delta > 0.0 && delta.is_finite() && eta.is_finite()) {
        return None;
    }
    let params: Vec<ScaleGevParams> = x[3..]
        .iter()
        .map(|&m| ScaleGevParams {
            mu: m,
            sigma: m / delta,
            gamma,
            alpha: eta * m,
        })
        .collect();
    params.iter().all(|p| p.is_valid()).then_some(params)
}

fn ls_objective(columns: &[&[f64]], covariate: &[f64], x: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
    let k = columns.len();
    let inf = (f64::INFINITY, vec![0.0; 3 + k]);
    let Some(params) = ls_params(x) else {
        return inf;
    };
    let (b, db) = barrier(x[2]);
    if !b.is_finite() {
        return inf;
    }
    let (delta, eta) = (x[0], x[1]);
    let n_total = (k * covariate.len()) as f64;
    let mut ll = 0.0;
    let mut grad = vec![0.0; 3 + k];
    for (d, (col, th)) in columns.iter().zip(&params).enumerate() {
        let mut s = Vector4::zeros();
        for (&xi, &ci) in col.iter().zip(covariate) {
            if with_grad {
                match gev::log_density_and_score(xi, ci, th) {
                    Some((v, sc)) => {
                        ll += v;
                        s += sc;
                    }
                    None => return inf,
                }
            } else {
                let v = gev::scale_gev_log_density(xi, ci, th);
                if v == f64::NEG_INFINITY {
                    return inf;
                }
                ll += v;
            }
        }
        if with_grad {
            let m = th.mu;
            grad[3 + d] = -(s[0] + s[1] / delta + s[3] * eta) / n_total;
            grad[0] -= -s[1] * m / (delta * delta) / n_total;
            grad[1] -= s[3] * m / n_total;
            grad[2] -= s[2] / n_total;
        }
    }
    grad[2] += db;
    (-ll / n_total + b, grad)
}

/// Maximum likelihood under the local-scaling constraints over the given columns.
pub fn fit_local_scaling(columns: &[&[f64]], covariate: &[f64], opts: &FitOptions) -> Result<LocalScalingFit> {
    let pooled = fit_columns(columns, covariate, opts)?;
    let p = pooled.params;
    let pooled_mean = columns.iter().flat_map(|c| c.iter()).sum::<f64>() / (columns.len() * covariate.len()) as f64;
    let mut x0 = vec![p.mu / p.sigma, p.alpha / p.mu, p.gamma];
    for col in columns {
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        x0.push(p.mu * (mean / pooled_mean).max(1e-3));
    }
    // shrink per-location locations toward the pooled value until feasible
    let mut feasible_start = ls_objective(columns, covariate, &x0, false).0.is_finite();
    for _ in 0..30 {
        if feasible_start {
            break;
        }
        for v in x0[3..].iter_mut() {
            *v = 0.5 * (*v + p.mu);
        }
        feasible_start = ls_objective(columns, covariate, &x0, false).0.is_finite();
    }
    if !feasible_start {
        x0[3..].iter_mut().for_each(|v| *v = p.mu);
    }

    let f = |x: &[f64]| ls_objective(columns, covariate, x, false).0;
    let fg = |x: &[f64]| ls_objective(columns, covariate, x, true);
    let mut step: Vec<f64> = x0.iter().map(|v| 0.05 * v.abs().max(0.1)).collect();
    step[2] = 0.05;
    let nm = optim::nelder_mead(f, &x0, &step, &opts.nelder_mead);
    let h = optim::hessian_from_gradient(|x| fg(x).1, &nm.x);
    let h0 = {
        let eig = h.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        (max > 0.0 && max.is_finite()).then(|| {
            let inv = eig.eigenvalues.map(|l| 1.0 / l.max(max * 1e-8));
            &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
        })
    };
    let r = optim::bfgs(fg, &nm.x, h0, &opts.bfgs);
    if !r.converged {
        return Err(Error::Fit(format!(
            "local-scaling fit did not converge: scaled gradient norm {:.3e} at {:?}",
            r.grad_norm, r.x
        )));
    }
    let (b, _) = barrier(r.x[2]);
    Ok(LocalScalingFit {
        delta: r.x[0],
        eta: r.x[1],
        gamma: r.x[2],
        mu: r.x[3..].to_vec(),
        neg_log_lik: (r.fx - b) * (columns.len() * covariate.len()) as f64,
        evaluations: pooled.evaluations + nm.evals + r.evals,
    })
}
