//! Spatial dependence models with unit-Fréchet margins.
//!
//! Three max-stable process families (Smith, Schlather, Brown–Resnick) are
//! fitted by pairwise composite likelihood and compared by CLIC; three
//! bivariate extreme-value families (Hüsler–Reiss, logistic, asymmetric
//! logistic) are fitted by full likelihood and compared by AIC.

mod bivariate;
mod maxstable;
mod pair;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub use bivariate::{fit_biv_ev, select_biv_ev, select_biv_ev_from, simulate_biv_ev};
pub use maxstable::{
    empirical_extremal_coefficient, fit_max_stable, select_max_stable, select_max_stable_from,
    simulate_max_stable, MaxStableSimulator,
};
pub use pair::PairModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxStableFamily {
    Smith,
    Schlather,
    BrownResnick,
}

impl MaxStableFamily {
    pub const ALL: [MaxStableFamily; 3] = [
        MaxStableFamily::Smith,
        MaxStableFamily::Schlather,
        MaxStableFamily::BrownResnick,
    ];

    pub fn n_params(self) -> usize {
        match self {
            MaxStableFamily::Smith | MaxStableFamily::Schlather => 3,
            MaxStableFamily::BrownResnick => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BivEvFamily {
    HuslerReiss,
    Logistic,
    AsymmetricLogistic,
}

impl BivEvFamily {
    pub const ALL: [BivEvFamily; 3] = [
        BivEvFamily::HuslerReiss,
        BivEvFamily::Logistic,
        BivEvFamily::AsymmetricLogistic,
    ];

    pub fn n_params(self) -> usize {
        match self {
            BivEvFamily::HuslerReiss | BivEvFamily::Logistic => 1,
            BivEvFamily::AsymmetricLogistic => 2,
        }
    }
}

/// A max-stable process model.
///
/// Smith uses a Gaussian storm profile with covariance `[[s11, s12], [s12, s22]]`.
/// Schlather uses the powered exponential correlation
/// `rho(h) = (1 - nugget) exp(-(h / range)^smooth)` for `h > 0`.
/// Brown–Resnick uses the variogram `(h / range)^smooth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MaxStableSpec {
    Smith { s11: f64, s12: f64, s22: f64 },
    Schlather { nugget: f64, range: f64, smooth: f64 },
    BrownResnick { range: f64, smooth: f64 },
}

impl MaxStableSpec {
    pub fn family(&self) -> MaxStableFamily {
        match self {
            MaxStableSpec::Smith { .. } => MaxStableFamily::Smith,
            MaxStableSpec::Schlather { .. } => MaxStableFamily::Schlather,
            MaxStableSpec::BrownResnick { .. } => MaxStableFamily::BrownResnick,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MaxStableSpec::Smith { s11, s12, s22 } => {
                s11 > 0.0 && s22 > 0.0 && s11 * s22 - s12 * s12 > 0.0 && s12.is_finite()
            }
            MaxStableSpec::Schlather {
                nugget,
                range,
                smooth,
            } => {
                (0.0..1.0).contains(&nugget)
                    && range > 0.0
                    && range.is_finite()
                    && smooth > 0.0
                    && smooth <= 2.0
            }
            MaxStableSpec::BrownResnick { range, smooth } => {
                range > 0.0 && range.is_finite() && smooth > 0.0 && smooth <= 2.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid max-stable parameters {self:?}")))
        }
    }

    /// Bivariate dependence between two sites separated by `h`.
    pub fn pair_model(&self, h: [f64; 2]) -> PairModel {
        match *self {
            MaxStableSpec::Smith { s11, s12, s22 } => {
                let det = s11 * s22 - s12 * s12;
                let q = (s22 * h[0] * h[0] - 2.0 * s12 * h[0] * h[1] + s11 * h[1] * h[1]) / det;
                PairModel::HuslerReiss { a: q.max(0.0).sqrt() }
            }
            MaxStableSpec::Schlather { .. } => PairModel::Schlather {
                rho: self.correlation(norm(h)),
            },
            MaxStableSpec::BrownResnick { range, smooth } => PairModel::HuslerReiss {
                a: (norm(h) / range).powf(smooth).sqrt(),
            },
        }
    }

    /// Schlather correlation at distance `dist`; `NaN` for other families.
    pub fn correlation(&self, dist: f64) -> f64 {
        match *self {
            MaxStableSpec::Schlather {
                nugget,
                range,
                smooth,
            } => {
                if dist == 0.0 {
                    1.0
                } else {
                    (1.0 - nugget) * (-(dist / range).powf(smooth)).exp()
                }
            }
            _ => f64::NAN,
        }
    }

    pub fn extremal_coefficient(&self, h: [f64; 2]) -> f64 {
        self.pair_model(h).extremal_coefficient()
    }
}

/// A bivariate extreme-value model with unit-Fréchet margins.
///
/// Hüsler–Reiss is parametrized so that `lambda -> 0` is complete dependence.
/// The asymmetric logistic keeps the weight of the second margin at one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BivEvSpec {
    HuslerReiss { lambda: f64 },
    Logistic { r: f64 },
    AsymmetricLogistic { r: f64, t1: f64 },
}

impl BivEvSpec {
    pub fn family(&self) -> BivEvFamily {
        match self {
            BivEvSpec::HuslerReiss { .. } => BivEvFamily::HuslerReiss,
            BivEvSpec::Logistic { .. } => BivEvFamily::Logistic,
            BivEvSpec::AsymmetricLogistic { .. } => BivEvFamily::AsymmetricLogistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BivEvSpec::HuslerReiss { lambda } => lambda > 0.0 && lambda.is_finite(),
            BivEvSpec::Logistic { r } => r > 0.0 && r <= 1.0,
            BivEvSpec::AsymmetricLogistic { r, t1 } => r > 0.0 && r <= 1.0 && (0.0..=1.0).contains(&t1),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid bivariate parameters {self:?}")))
        }
    }

    pub fn pair_model(&self) -> PairModel {
        match *self {
            BivEvSpec::HuslerReiss { lambda } => PairModel::HuslerReiss { a: lambda },
            BivEvSpec::Logistic { r } => PairModel::Logistic { r },
            BivEvSpec::AsymmetricLogistic { r, t1 } => PairModel::AsymmetricLogistic { r, t1 },
        }
    }

    pub fn extremal_coefficient(&self) -> f64 {
        self.pair_model().extremal_coefficient()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "spec", rename_all = "snake_case")]
pub enum DependenceSpec {
    MaxStable(MaxStableSpec),
    Bivariate(BivEvSpec),
}

impl DependenceSpec {
    pub fn n_params(&self) -> usize {
        match self {
            DependenceSpec::MaxStable(s) => s.family().n_params(),
            DependenceSpec::Bivariate(s) => s.family().n_params(),
        }
    }

    /// Position in the fixed family order used to break selection ties.
    fn family_rank(&self) -> usize {
        match self {
            DependenceSpec::MaxStable(s) => s.family() as usize,
            DependenceSpec::Bivariate(s) => s.family() as usize,
        }
    }
}

/// A fitted dependence model with its information criterion
/// (CLIC for max-stable fits, AIC for bivariate fits; smaller is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceFit {
    pub spec: DependenceSpec,
    pub criterion: f64,
    pub loglik: f64,
    pub converged: bool,
    /// Some parameter ended at (or numerically next to) a constraint boundary.
    pub at_boundary: bool,
    pub warnings: Vec<String>,
}

/// Picks the converged fit with smallest criterion; ties go to fewer
/// parameters, then to the earlier family.
pub fn select_best(fits: Vec<DependenceFit>) -> Result<DependenceFit> {
    let mut candidates: Vec<DependenceFit> = fits
        .into_iter()
        .filter(|f| f.converged && f.criterion.is_finite())
        .collect();
    if candidates.is_empty() {
        return Err(Error::Selection(
            "no candidate dependence model converged".into(),
        ));
    }
    candidates.sort_by(|a, b| {
        let tie = (a.criterion - b.criterion).abs() <= 1e-9 * a.criterion.abs().max(1.0);
        if tie {
            a.spec
                .n_params()
                .cmp(&b.spec.n_params())
                .then(a.spec.family_rank().cmp(&b.spec.family_rank()))
        } else {
            a.criterion.total_cmp(&b.criterion)
        }
    });
    Ok(candidates.swap_remove(0))
}

#[inline]
pub(crate) fn norm(h: [f64; 2]) -> f64 {
    h[0].hypot(h[1])
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
