//! Max-stable process simulation and composite-likelihood fitting.
//!
//! Simulation is exact, using extremal functions: for each site `k` in turn,
//! Poisson points `zeta` are drawn in decreasing order together with spectral
//! functions normalized to one at site `k`, keeping only those not already
//! dominated at earlier sites.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::{
    norm, select_best, std_normal_quantile, DependenceFit, DependenceSpec, MaxStableFamily,
    MaxStableSpec,
};
use crate::error::{Error, Result};
use crate::optim::{self, NelderMeadOptions};

enum Spectral {
    /// `W(x) - W(x_k) = (x - x_k)' A N` with `A A' = Sigma^-1`.
    Smith { a: Matrix2<f64> },
    /// Brown–Resnick: per-site Cholesky factors of the increment covariance
    /// over the other sites, plus the variogram matrix.
    Gaussian {
        chol: Vec<DMatrix<f64>>,
        vario: DMatrix<f64>,
    },
    /// Schlather: Student increments with two degrees of freedom.
    Student {
        chol: Vec<DMatrix<f64>>,
        corr: DMatrix<f64>,
    },
}

/// Exact simulator for one max-stable model at fixed sites.
pub struct MaxStableSimulator {
    coords: Vec<[f64; 2]>,
    spectral: Spectral,
}

fn others(k: usize, d: usize) -> impl Iterator<Item = usize> {
    (0..d).filter(move |&j| j != k)
}

fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m);
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += jitter;
        }
        if let Some(ch) = mm.cholesky() {
            return Ok(ch.l());
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    }
    Err(Error::InvalidInput(
        "increment covariance of the dependence model is not positive semidefinite".into(),
    ))
}

impl MaxStableSimulator {
    pub fn new(spec: &MaxStableSpec, coords: &[[f64; 2]]) -> Result<Self> {
        spec.validate()?;
        let d = coords.len();
        let dist = |i: usize, j: usize| norm([coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]]);
        let spectral = match *spec {
            MaxStableSpec::Smith { s11, s12, s22 } => {
                let sigma = Matrix2::new(s11, s12, s12, s22);
                let inv = sigma
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidInput("Smith covariance is singular".into()))?;
                let a = inv
                    .cholesky()
                    .ok_or_else(|| Error::InvalidInput("Smith covariance is not positive definite".into()))?
                    .l();
                Spectral::Smith { a }
            }
            MaxStableSpec::BrownResnick { range, smooth } => {
                let vario = DMatrix::from_fn(d, d, |i, j| (dist(i, j) / range).powf(smooth));
                let chol = (0..d)
                    .map(|k| {
                        let idx: Vec<usize> = others(k, d).collect();
                        let m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
                            let (i, j) = (idx[a], idx[b]);
                            0.5 * (vario[(i, k)] + vario[(j, k)] - vario[(i, j)])
                        });
                        cholesky_with_jitter(m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Spectral::Gaussian { chol, vario }
            }
            MaxStableSpec::Schlather { .. } => {
                let corr = DMatrix::from_fn(d, d, |i, j| spec.correlation(if i == j { 0.0 } else { dist(i, j) }));
                let chol = (0..d)
                    .map(|k| {
                        let idx: Vec<usize> = others(k, d).collect();
                        let m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
                            let (i, j) = (idx[a], idx[b]);
                            0.5 * (corr[(i, j)] - corr[(i, k)] * corr[(j, k)])
                        });
                        cholesky_with_jitter(m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Spectral::Student { chol, corr }
            }
        };
        Ok(Self {
            coords: coords.to_vec(),
            spectral,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.coords.len()
    }

    /// Spectral function normalized to one at site `k`, written into `out`.
    fn spectral<R: Rng + ?Sized>(&self, k: usize, rng: &mut R, out: &mut [f64], z: &mut DVector<f64>) {
        let d = self.coords.len();
        match &self.spectral {
            Spectral::Smith { a } => {
                let n = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                let an = a * n;
                let xk = self.coords[k];
                let at = a * a.transpose();
                for j in 0..d {
                    let h = Vector2::new(self.coords[j][0] - xk[0], self.coords[j][1] - xk[1]);
                    let q = h.dot(&(at * h));
                    out[j] = (h.dot(&an) - 0.5 * q).exp();
                }
            }
            Spectral::Gaussian { chol, vario } => {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let l = &chol[k];
                out[k] = 1.0;
                for (a, j) in others(k, d).enumerate() {
                    let mut g = 0.0;
                    for b in 0..=a {
                        g += l[(a, b)] * z[b];
                    }
                    out[j] = (g - 0.5 * vario[(j, k)]).exp();
                }
            }
            Spectral::Student { chol, corr } => {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let e: f64 = rng.sample(Exp1);
                let scale = 1.0 / e.sqrt();
                let l = &chol[k];
                out[k] = 1.0;
                for (a, j) in others(k, d).enumerate() {
                    let mut g = 0.0;
                    for b in 0..=a {
                        g += l[(a, b)] * z[b];
                    }
                    out[j] = (corr[(j, k)] + scale * g).max(0.0);
                }
            }
        }
    }

    /// One field replicate with unit-Fréchet margins.
    pub fn simulate_field<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.coords.len();
        let mut field = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut z = DVector::zeros(d.saturating_sub(1));
        for k in 0..d {
            let mut arrival: f64 = rng.sample(Exp1);
            let mut zeta = 1.0 / arrival;
            while zeta > field[k] {
                self.spectral(k, rng, &mut y, &mut z);
                if (0..k).all(|j| zeta * y[j] < field[j]) {
                    for j in k..d {
                        field[j] = field[j].max(zeta * y[j]);
                    }
                }
                let e: f64 = rng.sample(Exp1);
                arrival += e;
                zeta = 1.0 / arrival;
            }
        }
        field
    }

    /// `n` independent replicates, returned as one column per site.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.coords.len();
        let mut cols = vec![Vec::with_capacity(n); d];
        for _ in 0..n {
            let f = self.simulate_field(rng);
            for (c, v) in cols.iter_mut().zip(f) {
                c.push(v);
            }
        }
        cols
    }
}

/// Simulates `n` fields from `spec` at `coords`; one column per site.
pub fn simulate_max_stable<R: Rng + ?Sized>(
    spec: &MaxStableSpec,
    coords: &[[f64; 2]],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    Ok(MaxStableSimulator::new(spec, coords)?.simulate(n, rng))
}

/// Madogram-free estimator `n / sum(1 / max(y1, y2))` of the pairwise extremal coefficient.
pub fn empirical_extremal_coefficient(y1: &[f64], y2: &[f64]) -> f64 {
    let s: f64 = y1.iter().zip(y2).map(|(a, b)| 1.0 / a.max(*b)).sum();
    y1.len() as f64 / s
}

struct PairData<'a> {
    i: &'a [f64],
    j: &'a [f64],
    h: [f64; 2],
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained parametrization used by the optimizer.
fn spec_from_u(family: MaxStableFamily, u: &[f64]) -> Option<MaxStableSpec> {
    if u.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let spec = match family {
        MaxStableFamily::Smith => {
            let (s11, s22) = (u[0].exp(), u[1].exp());
            let rho = u[2].tanh();
            MaxStableSpec::Smith {
                s11,
                s12: rho * (s11 * s22).sqrt(),
                s22,
            }
        }
        MaxStableFamily::Schlather => MaxStableSpec::Schlather {
            nugget: sigmoid(u[0]),
            range: u[1].exp(),
            smooth: 2.0 * sigmoid(u[2]),
        },
        MaxStableFamily::BrownResnick => MaxStableSpec::BrownResnick {
            range: u[0].exp(),
            smooth: 2.0 * sigmoid(u[1]),
        },
    };
    spec.validate().ok().map(|_| spec)
}

fn u_from_spec(spec: &MaxStableSpec) -> Vec<f64> {
    match *spec {
        MaxStableSpec::Smith { s11, s12, s22 } => {
            vec![s11.ln(), s22.ln(), (s12 / (s11 * s22).sqrt()).clamp(-0.99, 0.99).atanh()]
        }
        MaxStableSpec::Schlather {
            nugget,
            range,
            smooth,
        } => vec![
            logit(nugget.clamp(1e-3, 0.99)),
            range.ln(),
            logit((smooth / 2.0).clamp(0.01, 0.99)),
        ],
        MaxStableSpec::BrownResnick { range, smooth } => {
            vec![range.ln(), logit((smooth / 2.0).clamp(0.01, 0.99))]
        }
    }
}

/// Box on the unconstrained coordinates; the simplex search stays inside it.
fn u_bounds(family: MaxStableFamily) -> &'static [f64] {
    match family {
        MaxStableFamily::Smith => &[12.0, 12.0, 6.0],
        MaxStableFamily::Schlather => &[12.0, 12.0, 12.0],
        MaxStableFamily::BrownResnick => &[12.0, 12.0],
    }
}

fn inside_box(family: MaxStableFamily, u: &[f64]) -> bool {
    u.iter().zip(u_bounds(family)).all(|(v, b)| v.abs() <= *b)
}

/// Whether the optimum sits numerically on the edge of the parameter space.
fn at_boundary(family: MaxStableFamily, u: &[f64]) -> bool {
    u.iter().zip(u_bounds(family)).any(|(v, b)| v.abs() > b - 3.0)
}

fn pair_loglik_by_year(spec: &MaxStableSpec, pairs: &[PairData], n: usize, out: &mut [f64]) {
    out[..n].iter_mut().for_each(|v| *v = 0.0);
    for p in pairs {
        let m = spec.pair_model(p.h);
        for t in 0..n {
            out[t] += m.log_density(p.i[t], p.j[t]);
        }
    }
}

fn total_loglik(spec: &MaxStableSpec, pairs: &[PairData]) -> f64 {
    let mut s = 0.0;
    for p in pairs {
        let m = spec.pair_model(p.h);
        for (&a, &b) in p.i.iter().zip(p.j) {
            s += m.log_density(a, b);
        }
    }
    s
}

/// Least-squares starting values from empirical pairwise extremal coefficients.
fn starting_spec(family: MaxStableFamily, pairs: &[PairData]) -> MaxStableSpec {
    let thetas: Vec<f64> = pairs
        .iter()
        .map(|p| empirical_extremal_coefficient(p.i, p.j).clamp(1.01, 1.99))
        .collect();
    // variogram-type dependence a^2 with theta = 2 Phi(a / 2)
    let a2: Vec<f64> = thetas
        .iter()
        .map(|&t| (2.0 * std_normal_quantile(t / 2.0)).powi(2))
        .collect();
    let dists: Vec<f64> = pairs.iter().map(|p| norm(p.h)).collect();
    let median_dist = {
        let mut d = dists.clone();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    };
    let isotropic_scale = {
        let mut r: Vec<f64> = a2.iter().zip(&dists).map(|(a, h)| h * h / a).collect();
        r.sort_by(f64::total_cmp);
        r[r.len() / 2]
    };
    match family {
        MaxStableFamily::Smith => {
            // a^2 = q11 h1^2 + 2 q12 h1 h2 + q22 h2^2 with Q = Sigma^-1
            let mut xtx = nalgebra::Matrix3::<f64>::zeros();
            let mut xty = nalgebra::Vector3::<f64>::zeros();
            for (p, &y) in pairs.iter().zip(&a2) {
                let x = nalgebra::Vector3::new(p.h[0] * p.h[0], 2.0 * p.h[0] * p.h[1], p.h[1] * p.h[1]);
                xtx += x * x.transpose();
                xty += x * y;
            }
            let fallback = MaxStableSpec::Smith {
                s11: isotropic_scale,
                s12: 0.0,
                s22: isotropic_scale,
            };
            let Some(q) = xtx.try_inverse().map(|m| m * xty) else {
                return fallback;
            };
            let qm = Matrix2::new(q[0], q[1], q[1], q[2]);
            match qm.try_inverse() {
                Some(s) if q[0] > 0.0 && q[2] > 0.0 && q[0] * q[2] - q[1] * q[1] > 0.0 => {
                    let spec = MaxStableSpec::Smith {
                        s11: s[(0, 0)],
                        s12: s[(0, 1)],
                        s22: s[(1, 1)],
                    };
                    if spec.validate().is_ok() {
                        spec
                    } else {
                        fallback
                    }
                }
                _ => fallback,
            }
        }
        MaxStableFamily::BrownResnick => {
            // ln a^2 = smooth (ln h - ln range)
            let n = pairs.len() as f64;
            let xs: Vec<f64> = dists.iter().map(|h| h.ln()).collect();
            let ys: Vec<f64> = a2.iter().map(|a| a.ln()).collect();
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            if sxx > 1e-12 {
                let smooth = (sxy / sxx).clamp(0.2, 1.8);
                let range = (mx - my / smooth).exp();
                if range.is_finite() && range > 0.0 {
                    return MaxStableSpec::BrownResnick { range, smooth };
                }
            }
            MaxStableSpec::BrownResnick {
                range: isotropic_scale.sqrt(),
                smooth: 1.0,
            }
        }
        MaxStableFamily::Schlather => {
            // theta = 1 + sqrt((1 - rho) / 2) and -ln(rho / (1 - nugget)) = h / range
            let nugget: f64 = 0.05;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (&t, &h) in thetas.iter().zip(&dists) {
                let rho = (1.0 - 2.0 * (t - 1.0).powi(2)).clamp(0.01, 0.94);
                let y = -(rho / (1.0 - nugget)).ln();
                sxy += h * y;
                sxx += h * h;
            }
            let range = if sxy > 0.0 { sxx / sxy } else { median_dist };
            MaxStableSpec::Schlather {
                nugget,
                range,
                smooth: 1.0,
            }
        }
    }
}

fn build_pairs<'a>(frechet: &'a [Vec<f64>], coords: &[[f64; 2]]) -> Vec<PairData<'a>> {
    let d = frechet.len();
    let mut pairs = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            pairs.push(PairData {
                i: &frechet[i],
                j: &frechet[j],
                h: [coords[j][0] - coords[i][0], coords[j][1] - coords[i][1]],
            });
        }
    }
    pairs
}

fn validate_input(frechet: &[Vec<f64>], coords: &[[f64; 2]]) -> Result<usize> {
    let d = frechet.len();
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "max-stable fitting needs at least two sites, got {d}"
        )));
    }
    if coords.len() != d {
        return Err(Error::InvalidInput(format!("{d} columns but {} coordinates", coords.len())));
    }
    let n = frechet[0].len();
    if n < 2 || frechet.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("Fréchet columns must share a length of at least two".into()));
    }
    if frechet.iter().flatten().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("Fréchet values must be positive and finite".into()));
    }
    Ok(n)
}

/// Maximizes the pairwise composite likelihood of one family; the criterion is CLIC.
pub fn fit_max_stable(
    frechet: &[Vec<f64>],
    coords: &[[f64; 2]],
    family: MaxStableFamily,
) -> Result<DependenceFit> {
    let n = validate_input(frechet, coords)?;
    let pairs = build_pairs(frechet, coords);
    let norm_const = (pairs.len() * n) as f64;

    let objective = |u: &[f64]| match spec_from_u(family, u) {
        Some(spec) if inside_box(family, u) => -total_loglik(&spec, &pairs) / norm_const,
        _ => f64::INFINITY,
    };
    let start = starting_spec(family, &pairs);
    let u0: Vec<f64> = u_from_spec(&start)
        .iter()
        .zip(u_bounds(family))
        .map(|(v, b)| v.clamp(-(b - 1.0), b - 1.0))
        .collect();
    let steps = vec![0.3; u0.len()];
    let opts = NelderMeadOptions {
        max_evals: 800,
        f_tol: 1e-9,
        x_tol: 1e-5,
    };
    let mut nm = optim::nelder_mead(objective, &u0, &steps, &opts);
    if !nm.converged && nm.fx.is_finite() {
        // restart once from the best point with a fresh simplex
        let again = optim::nelder_mead(objective, &nm.x.clone(), &steps, &opts);
        nm = optimum_merge(nm, again);
    }
    let spec = spec_from_u(family, &nm.x).ok_or_else(|| {
        Error::Fit(format!("composite likelihood for {family:?} has no feasible optimum"))
    })?;
    if !nm.fx.is_finite() {
        return Err(Error::Fit(format!(
            "composite likelihood for {family:?} is not finite at {spec:?}"
        )));
    }
    let loglik = -nm.fx * norm_const;

    let mut warnings = Vec::new();
    let boundary = at_boundary(family, &nm.x);
    if boundary {
        warnings.push(format!("{family:?} fit ended at a parameter boundary: {spec:?}"));
    }
    if !nm.converged {
        warnings.push(format!(
            "{family:?} simplex search stopped after {} evaluations without meeting tolerances",
            nm.evals
        ));
    }

    let penalty = clic_penalty(family, &nm.x, &pairs, n, &mut warnings);
    let criterion = -2.0 * (loglik - penalty);
    Ok(DependenceFit {
        spec: DependenceSpec::MaxStable(spec),
        criterion,
        loglik,
        converged: nm.converged && criterion.is_finite(),
        at_boundary: boundary,
        warnings,
    })
}

fn optimum_merge(a: optim::OptimResult, b: optim::OptimResult) -> optim::OptimResult {
    if b.fx <= a.fx {
        optim::OptimResult {
            evals: a.evals + b.evals,
            ..b
        }
    } else {
        optim::OptimResult {
            evals: a.evals + b.evals,
            ..a
        }
    }
}

/// Relative eigenvalue below which an information direction counts as flat.
const CLIC_EIGEN_RATIO: f64 = 1e-6;

/// `tr(J^-1 K)` from per-year composite scores and the composite Hessian.
fn clic_penalty(
    family: MaxStableFamily,
    u: &[f64],
    pairs: &[PairData],
    n: usize,
    warnings: &mut Vec<String>,
) -> f64 {
    let p = u.len();
    let mut scores = DMatrix::zeros(n, p);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut up = u.to_vec();
    for i in 0..p {
        let h = 1e-4 * u[i].abs().max(1.0);
        up[i] = u[i] + h;
        let (Some(sp), Some(sm)) = (spec_from_u(family, &up), {
            up[i] = u[i] - h;
            spec_from_u(family, &up)
        }) else {
            return f64::NAN;
        };
        up[i] = u[i];
        pair_loglik_by_year(&sp, pairs, n, &mut plus);
        pair_loglik_by_year(&sm, pairs, n, &mut minus);
        for t in 0..n {
            scores[(t, i)] = (plus[t] - minus[t]) / (2.0 * h);
        }
    }
    let k = scores.transpose() * &scores / n as f64;
    let hess = optim::numeric_hessian(
        |v| match spec_from_u(family, v) {
            Some(s) => total_loglik(&s, pairs),
            None => f64::NAN,
        },
        u,
    );
    let j = -hess / n as f64;
    if j.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    // Directions with negligible curvature (flat likelihood toward a boundary)
    // carry no information and are left out of the trace.
    let eig = ((&j + j.transpose()) * 0.5).symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        warnings.push(format!("{family:?} composite likelihood is flat at the optimum; CLIC penalty set to 0"));
        return 0.0;
    }
    let mut penalty = 0.0;
    let mut dropped = 0;
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        if l > CLIC_EIGEN_RATIO * max {
            let v = eig.eigenvectors.column(idx);
            penalty += (v.transpose() * &k * v)[(0, 0)] / l;
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        warnings.push(format!(
            "{family:?} composite information has {dropped} negligible direction(s); CLIC penalty uses the remaining ones"
        ));
    }
    penalty
}

/// Fits all three families and returns the CLIC-best converged fit.
pub fn select_max_stable(frechet: &[Vec<f64>], coords: &[[f64; 2]]) -> Result<DependenceFit> {
    select_max_stable_from(frechet, coords, &MaxStableFamily::ALL)
}

/// Selection restricted to the given candidate families.
pub fn select_max_stable_from(
    frechet: &[Vec<f64>],
    coords: &[[f64; 2]],
    families: &[MaxStableFamily],
) -> Result<DependenceFit> {
    validate_input(frechet, coords)?;
    if families.is_empty() {
        return Err(Error::Selection("no candidate max-stable families".into()));
    }
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for &f in families {
        match fit_max_stable(frechet, coords, f) {
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
