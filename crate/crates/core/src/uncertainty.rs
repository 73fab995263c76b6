//! Joint covariance of the stacked per-location estimators.
//!
//! Block `(j, k)` is the sandwich `J_j^-1 C_jk J_k^-1`, where `J_d` is the mean
//! log-likelihood Hessian at location `d` and `C_jk` averages
//! `B_j(t) T_j(t)^-1 Gamma_jk T_k(t)^-1 B_k(t)'` over years, with `Gamma_jk` the
//! empirical cross-covariance of the standardized GEV scores at the two locations.

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gev::{self, ScaleGevParams};
use crate::linalg;
use crate::panel::BlockMaximaPanel;

/// The `4D x 4D` covariance matrix of the stacked estimators, scaled so that
/// `matrix / n` approximates the finite-sample covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamCovariance {
    matrix: DMatrix<f64>,
    n: usize,
    pub warnings: Vec<String>,
}

impl ParamCovariance {
    pub fn from_matrix(matrix: DMatrix<f64>, n: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || !matrix.nrows().is_multiple_of(4) || matrix.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "covariance must be a square matrix of size 4D, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            n,
            warnings: Vec::new(),
        })
    }

    pub fn n_locations(&self) -> usize {
        self.matrix.nrows() / 4
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn block(&self, j: usize, k: usize) -> Matrix4<f64> {
        self.matrix.fixed_view::<4, 4>(4 * j, 4 * k).into_owned()
    }

    /// Sub-matrix for the locations in `locs`, taken in sorted order.
    pub fn pairwise_block(&self, locs: &[usize]) -> Result<DMatrix<f64>> {
        let d = self.n_locations();
        crate::panel::validate_locations(locs, d)?;
        let mut sorted = locs.to_vec();
        sorted.sort_unstable();
        let k = sorted.len();
        let mut out = DMatrix::zeros(4 * k, 4 * k);
        for (a, &j) in sorted.iter().enumerate() {
            for (b, &l) in sorted.iter().enumerate() {
                out.view_mut((4 * a, 4 * b), (4, 4))
                    .copy_from(&self.matrix.view((4 * j, 4 * l), (4, 4)));
            }
        }
        Ok(out)
    }
}

/// Residuals `(M_j(t) - mu_j(c(t))) / sigma_j(c(t))`, one vector per location.
pub fn standardized_residuals(
    columns: &[&[f64]],
    covariate: &[f64],
    fits: &[ScaleGevParams],
) -> Vec<Vec<f64>> {
    columns
        .iter()
        .zip(fits)
        .map(|(col, th)| {
            col.iter()
                .zip(covariate)
                .map(|(&x, &c)| gev::standardize(x, c, th))
                .collect()
        })
        .collect()
}

/// Estimates the joint covariance for all panel columns.
pub fn estimate_sigma(
    panel: &BlockMaximaPanel,
    fits: &[ScaleGevParams],
    hessians: &[Matrix4<f64>],
) -> Result<ParamCovariance> {
    let columns: Vec<&[f64]> = panel.columns().iter().map(|c| c.as_slice()).collect();
    estimate_sigma_columns(&columns, panel.covariate().values(), fits, hessians)
}

/// Column-level variant of [`estimate_sigma`]; block indices follow `columns`.
pub fn estimate_sigma_columns(
    columns: &[&[f64]],
    covariate: &[f64],
    fits: &[ScaleGevParams],
    hessians: &[Matrix4<f64>],
) -> Result<ParamCovariance> {
    let d = columns.len();
    if fits.len() != d || hessians.len() != d || d == 0 {
        return Err(Error::InvalidInput(format!(
            "{d} columns, {} fits and {} Hessians",
            fits.len(),
            hessians.len()
        )));
    }
    let n = covariate.len();
    let nf = n as f64;

    let mut warnings = Vec::new();
    let mut j_inv = Vec::with_capacity(d);
    for (loc, h) in hessians.iter().enumerate() {
        let dm = DMatrix::from_iterator(4, 4, h.iter().copied());
        let inv = linalg::sym_inverse(&dm).ok_or_else(|| Error::Covariance {
            location: loc,
            reason: "Hessian is zero or not finite".into(),
        })?;
        if inv.pseudo {
            warnings.push(format!(
                "Hessian at location {loc} is near singular; used a pseudo-inverse"
            ));
        }
        j_inv.push(Matrix4::from_iterator(inv.inverse.iter().copied()));
    }

    // Centered standardized scores and per-year chain-rule factors.
    let mut scores: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(d);
    let mut factors: Vec<Vec<nalgebra::Matrix4x3<f64>>> = Vec::with_capacity(d);
    for (loc, (col, th)) in columns.iter().zip(fits).enumerate() {
        if col.len() != n {
            return Err(Error::InvalidInput(format!(
                "column {loc} has {} values, expected {n}",
                col.len()
            )));
        }
        let mut s = Vec::with_capacity(n);
        let mut f = Vec::with_capacity(n);
        for (&x, &c) in col.iter().zip(covariate) {
            let eff = th.effective(c);
            let z = (x - eff.mu) / eff.sigma;
            let sc = gev::standard_score(z, th.gamma).ok_or_else(|| Error::Covariance {
                location: loc,
                reason: format!("observation {x} outside the fitted support"),
            })?;
            s.push(sc);
            let t_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / eff.sigma, 1.0 / eff.sigma, 1.0));
            f.push(gev::chain_matrix(c, th) * t_inv);
        }
        let mean = s.iter().fold(Vector3::zeros(), |a, v| a + v) / nf;
        s.iter_mut().for_each(|v| *v -= mean);
        scores.push(s);
        factors.push(f);
    }

    let mut matrix = DMatrix::zeros(4 * d, 4 * d);
    for j in 0..d {
        for k in j..d {
            let mut gamma_jk = Matrix3::zeros();
            for t in 0..n {
                gamma_jk += scores[j][t] * scores[k][t].transpose();
            }
            gamma_jk /= nf;
            let mut c_jk = Matrix4::zeros();
            for t in 0..n {
                c_jk += factors[j][t] * gamma_jk * factors[k][t].transpose();
            }
            c_jk /= nf;
            let block = j_inv[j] * c_jk * j_inv[k];
            matrix.view_mut((4 * j, 4 * k), (4, 4)).copy_from(&block);
            if j != k {
                matrix
                    .view_mut((4 * k, 4 * j), (4, 4))
                    .copy_from(&block.transpose());
            }
        }
    }
    let sym = (&matrix + matrix.transpose()) * 0.5;
    Ok(ParamCovariance {
        matrix: sym,
        n,
        warnings,
    })
}
