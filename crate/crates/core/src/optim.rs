//! Small dense optimizers: Nelder–Mead simplex search, BFGS with a
//! backtracking line search, and finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter (relative to the best vertex) falls below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-10,
            x_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
    /// Final gradient sup-norm, where the method tracks one.
    pub grad_norm: f64,
}

/// Minimizes `f` starting from `x0` with initial simplex edge lengths `step`.
///
/// Non-finite objective values are treated as `+inf`, letting the simplex
/// retreat from infeasible regions.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], opts: &NelderMeadOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    while evals < opts.max_evals {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = (values[worst] - values[best]).abs();
        let scale = simplex[best].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diam = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if values[best].is_finite() && f_spread <= opts.f_tol && diam <= opts.x_tol * scale {
            converged = true;
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }

        for k in 0..n {
            trial[k] = centroid[k] + alpha * (centroid[k] - simplex[worst][k]);
        }
        let fr = eval(&trial, &mut evals);

        if fr < values[best] {
            for k in 0..n {
                trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
            }
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        // Contraction, outside if the reflection improved on the worst point.
        let (base, fbase) = if fr < values[worst] {
            (trial.clone(), fr)
        } else {
            (simplex[worst].clone(), values[worst])
        };
        for k in 0..n {
            trial2[k] = centroid[k] + rho * (base[k] - centroid[k]);
        }
        let fc = eval(&trial2, &mut evals);
        if fc < fbase {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = fc;
            continue;
        }
        let best_v = simplex[best].clone();
        for &i in &order[1..] {
            for k in 0..n {
                simplex[i][k] = best_v[k] + shrink * (simplex[i][k] - best_v[k]);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    OptimResult {
        x: simplex[best].clone(),
        fx: values[best],
        evals,
        converged,
        grad_norm: f64::NAN,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when `max_i |g_i| * max(|x_i|, 1)` falls below this.
    pub g_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            g_tol: 1e-7,
        }
    }
}

fn scaled_grad_norm(x: &DVector<f64>, g: &DVector<f64>) -> f64 {
    x.iter()
        .zip(g.iter())
        .map(|(xi, gi)| gi.abs() * xi.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Quasi-Newton minimization of `fg`, which returns the value and gradient.
///
/// `h0_inv` seeds the inverse Hessian approximation (identity when `None`).
/// An infinite value signals infeasibility and makes the line search backtrack.
pub fn bfgs<F>(mut fg: F, x0: &[f64], h0_inv: Option<DMatrix<f64>>, opts: &BfgsOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut evals = 1usize;
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = fg(x.as_slice());
    let mut g = DVector::from_vec(g0);
    let mut h = h0_inv.unwrap_or_else(|| DMatrix::identity(n, n));
    let mut converged = false;

    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return OptimResult {
            x: x0.to_vec(),
            fx,
            evals,
            converged: false,
            grad_norm: f64::INFINITY,
        };
    }

    let mut stalls = 0;
    for _ in 0..opts.max_iter {
        if scaled_grad_norm(&x, &g) < opts.g_tol {
            converged = true;
            break;
        }
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &dir * step;
            let (fn_, gn) = fg(xn.as_slice());
            evals += 1;
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope && gn.iter().all(|v| v.is_finite()) {
                accepted = Some((xn, fn_, DVector::from_vec(gn)));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };

        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        let df = fx - fn_;
        x = xn;
        g = gn;
        fx = fn_;
        if df.abs() <= 1e-15 * fx.abs().max(1.0) {
            stalls += 1;
            if stalls >= 3 {
                converged = scaled_grad_norm(&x, &g) < opts.g_tol.sqrt();
                break;
            }
        } else {
            stalls = 0;
        }
    }

    let grad_norm = scaled_grad_norm(&x, &g);
    OptimResult {
        x: x.as_slice().to_vec(),
        fx,
        evals,
        converged: converged || grad_norm < opts.g_tol,
        grad_norm,
    }
}

/// Step size for central differences around `x`.
#[inline]
fn fd_step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn numeric_gradient<F>(mut f: F, x: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = fd_step(x[i], 1e-6);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector-valued gradient, symmetrized.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64]) -> DMatrix<f64>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = fd_step(x[j], 1e-5);
        xp[j] = x[j] + step;
        let gp = grad(&xp);
        xp[j] = x[j] - step;
        let gm = grad(&xp);
        xp[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Central-difference Hessian of a scalar function.
pub fn numeric_hessian<F>(mut f: F, x: &[f64]) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let f0 = f(x);
    let steps: Vec<f64> = x.iter().map(|&v| fd_step(v, 1e-4)).collect();
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                xp[i] = x[i] + steps[i];
                let fp = f(&xp);
                xp[i] = x[i] - steps[i];
                let fm = f(&xp);
                xp[i] = x[i];
                (fp - 2.0 * f0 + fm) / (steps[i] * steps[i])
            } else {
                let mut quad = [0.0; 4];
                for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                    .into_iter()
                    .enumerate()
                {
                    xp[i] = x[i] + si * steps[i];
                    xp[j] = x[j] + sj * steps[j];
                    quad[k] = f(&xp);
                }
                xp[i] = x[i];
                xp[j] = x[j];
                (quad[0] - quad[1] - quad[2] + quad[3]) / (4.0 * steps[i] * steps[j])
            };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosenbrock_grad(x: &[f64]) -> Vec<f64> {
        vec![
            -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
            200.0 * (x[1] - x[0] * x[0]),
        ]
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_retreats_from_infeasible_region() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { (x[0] - 0.1).powi(2) - x[0].ln() * 0.0 };
        let r = nelder_mead(f, &[1.0], &[-2.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.1).abs() < 1e-5);
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let r = bfgs(
            |x| (rosenbrock(x), rosenbrock_grad(x)),
            &[-1.2, 1.0],
            None,
            &BfgsOptions::default(),
        );
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_derivatives_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + x[1] * x[1];
        let g = numeric_gradient(f, &[1.0, 2.0]);
        assert!((g[0] - 10.0).abs() < 1e-6 && (g[1] - 6.0).abs() < 1e-6);
        let h = numeric_hessian(f, &[1.0, 2.0]);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-4 && (h[(0, 1)] - 2.0).abs() < 1e-4);
        let hg = hessian_from_gradient(|x| vec![6.0 * x[0] + 2.0 * x[1], 2.0 * x[0] + 2.0 * x[1]], &[1.0, 2.0]);
        assert!((hg[(1, 1)] - 2.0).abs() < 1e-8);
    }
}
