//! Bivariate exponent measures and densities shared by all dependence families.
//!
//! With unit-Fréchet margins the joint cdf is `exp(-V(y1, y2))` and the density
//! is `exp(-V) (V1 V2 - V12)`, subscripts denoting partial derivatives.

use serde::{Deserialize, Serialize};

use super::std_normal_cdf;

/// Dependence between two unit-Fréchet variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairModel {
    /// Hüsler–Reiss with dependence `a = sqrt(variogram)`; Smith and Brown–Resnick pairs.
    HuslerReiss { a: f64 },
    /// Schlather pair with correlation `rho`.
    Schlather { rho: f64 },
    Logistic { r: f64 },
    /// Asymmetric logistic with the second margin's weight fixed at one.
    AsymmetricLogistic { r: f64, t1: f64 },
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
fn ln_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `ln Phi(x)`, accurate far into the lower tail.
#[inline]
fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        std_normal_cdf(x).ln()
    } else {
        let x2 = x * x;
        ln_phi(x) - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

#[inline]
fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl PairModel {
    /// Exponent measure `V(y1, y2)`.
    pub fn exponent(&self, y1: f64, y2: f64) -> f64 {
        match *self {
            PairModel::HuslerReiss { a } => {
                if a <= 0.0 {
                    return 1.0 / y1.min(y2);
                }
                let l = (y2 / y1).ln() / a;
                std_normal_cdf(a / 2.0 + l) / y1 + std_normal_cdf(a / 2.0 - l) / y2
            }
            PairModel::Schlather { rho } => {
                let r = (y1 * y1 + y2 * y2 - 2.0 * rho * y1 * y2).max(0.0).sqrt();
                (y1 + y2 + r) / (2.0 * y1 * y2)
            }
            PairModel::Logistic { r } => {
                let q = 1.0 / r;
                (r * log_sum_exp(&[-q * y1.ln(), -q * y2.ln()])).exp()
            }
            PairModel::AsymmetricLogistic { r, t1 } => {
                let q = 1.0 / r;
                let ls = log_sum_exp(&[q * (t1.ln() - y1.ln()), -q * y2.ln()]);
                (1.0 - t1) / y1 + (r * ls).exp()
            }
        }
    }

    /// `P(Y1 <= y1, Y2 <= y2)`.
    pub fn joint_cdf(&self, y1: f64, y2: f64) -> f64 {
        (-self.exponent(y1, y2)).exp()
    }

    /// `V(1, 1)`: 1 for complete dependence, 2 for independence.
    pub fn extremal_coefficient(&self) -> f64 {
        self.exponent(1.0, 1.0)
    }

    /// Log of the joint density of `(y1, y2)`.
    pub fn log_density(&self, y1: f64, y2: f64) -> f64 {
        let (l1, l2) = (y1.ln(), y2.ln());
        match *self {
            PairModel::HuslerReiss { a } => {
                // V1 = -Phi(w)/y1^2, V2 = -Phi(v)/y2^2, V12 = -phi(w)/(a y1^2 y2)
                let l = (y2 / y1).ln() / a;
                let w = a / 2.0 + l;
                let v = a / 2.0 - l;
                let v_exp = std_normal_cdf(w) / y1 + std_normal_cdf(v) / y2;
                let inner = log_sum_exp(&[ln_cdf(w) + ln_cdf(v) - l2, ln_phi(w) - a.ln()]);
                -v_exp - 2.0 * l1 - l2 + inner
            }
            PairModel::Schlather { rho } => {
                let r2 = y1 * y1 + y2 * y2 - 2.0 * rho * y1 * y2;
                let r = r2.sqrt();
                let v_exp = (y1 + y2 + r) / (2.0 * y1 * y2);
                let v1 = (rho * y1 - y2 - r) / (2.0 * y1 * y1 * r);
                let v2 = (rho * y2 - y1 - r) / (2.0 * y2 * y2 * r);
                let v12 = (rho * rho - 1.0) / (2.0 * r2 * r);
                -v_exp + (v1 * v2 - v12).ln()
            }
            PairModel::Logistic { r } => {
                let q = 1.0 / r;
                let ls = log_sum_exp(&[-q * l1, -q * l2]);
                let sr = (r * ls).exp();
                -sr + (r - 2.0) * ls - (q + 1.0) * (l1 + l2) + (sr + (1.0 - r) * q).ln()
            }
            PairModel::AsymmetricLogistic { r, t1 } => {
                let q = 1.0 / r;
                let lt1 = t1.ln();
                let ls = log_sum_exp(&[q * (lt1 - l1), -q * l2]);
                let v_exp = (1.0 - t1) / y1 + (r * ls).exp();
                let a1 = q * lt1 - (q + 1.0) * l1;
                let b2 = -(q + 1.0) * l2;
                let terms = [
                    (r - 1.0) * ls + b2 + (1.0 - t1).ln() - 2.0 * l1,
                    2.0 * (r - 1.0) * ls + a1 + b2,
                    ((1.0 - r) * q).ln() + (r - 2.0) * ls + a1 + b2,
                ];
                -v_exp + log_sum_exp(&terms)
            }
        }
    }
}
