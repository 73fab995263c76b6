//! Local and regional return levels and periods under a fitted scale-GEV model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dependence::{self, DependenceFit, DependenceSpec, MaxStableFamily, MaxStableSimulator, MaxStableSpec};
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions, FitReport};
use crate::gev::{self, ScaleGevParams};
use crate::panel::BlockMaximaPanel;

pub const DEFAULT_SIMULATIONS: usize = 100_000;

/// Simulation sizes below this carry a warning about quantile noise.
pub const MIN_QUIET_SIMULATIONS: usize = 1000;

/// Probabilities reported in [`RegionalEstimate::quantiles`].
pub const SUMMARY_PROBS: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 0.999];

/// Return period `period` and/or event magnitude `magnitude` in the climate of
/// the covariate value `reference_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnSpec {
    pub period: Option<f64>,
    pub magnitude: Option<f64>,
    pub reference_c: f64,
}

impl ReturnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period.is_none() && self.magnitude.is_none() {
            return Err(Error::InvalidInput("a return period or a magnitude is required".into()));
        }
        if let Some(t) = self.period {
            if !(t > 1.0 && t.is_finite()) {
                return Err(Error::Domain(format!("return period must exceed 1, got {t}")));
            }
        }
        if let Some(r) = self.magnitude {
            if !r.is_finite() {
                return Err(Error::Domain(format!("magnitude must be finite, got {r}")));
            }
        }
        if !self.reference_c.is_finite() {
            return Err(Error::Domain("reference covariate must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalEstimate {
    /// Local return level for the requested period.
    pub rl_local: Option<f64>,
    /// Regional return level for the requested period.
    pub rl_regional: Option<f64>,
    /// Magnitude at which the regional return period was evaluated: the
    /// requested one, or else the local return level.
    pub magnitude: f64,
    /// Regional return period of `magnitude`; infinite when no simulated maximum exceeded it.
    pub rp_regional: f64,
    pub b_sim: usize,
    /// Empirical quantiles of the simulated regional maxima at [`SUMMARY_PROBS`].
    pub quantiles: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// `T`-year return level at covariate value `reference_c`.
pub fn local_rl(theta: &ScaleGevParams, period: f64, reference_c: f64) -> Result<f64> {
    if !(period > 1.0) {
        return Err(Error::Domain(format!("return period must exceed 1, got {period}")));
    }
    gev::gev_quantile(1.0 - 1.0 / period, &theta.effective(reference_c))
}

/// Return period `1 / (1 - G(r))` of magnitude `r` at covariate value `reference_c`.
pub fn local_rp(theta: &ScaleGevParams, r: f64, reference_c: f64) -> f64 {
    1.0 / (1.0 - gev::gev_cdf(r, &theta.effective(reference_c)))
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`) of an ascending slice.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Regional return level and period for the maximum over `coords`.
///
/// Simulates `b_sim` max-stable fields, maps every site to the pooled margin
/// at `spec.reference_c` and takes the field maximum.
pub fn regional_rl_rp<R: Rng + ?Sized>(
    pooled_fit: &ScaleGevParams,
    dependence: &MaxStableSpec,
    coords: &[[f64; 2]],
    spec: &ReturnSpec,
    b_sim: usize,
    rng: &mut R,
) -> Result<RegionalEstimate> {
    spec.validate()?;
    if b_sim == 0 {
        return Err(Error::InvalidInput("at least one simulated field is required".into()));
    }
    let sim = MaxStableSimulator::new(dependence, coords)?;
    let mut warnings = Vec::new();
    if b_sim < MIN_QUIET_SIMULATIONS {
        warnings.push(format!(
            "only {b_sim} simulated fields; regional estimates carry substantial Monte Carlo noise"
        ));
    }
    // The margin map is increasing and shared by all sites, so the field
    // maximum can be taken on the Fréchet scale.
    let mut maxima = Vec::with_capacity(b_sim);
    for _ in 0..b_sim {
        let field = sim.simulate_field(rng);
        let y = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        maxima.push(gev::from_frechet_value(y, spec.reference_c, pooled_fit)?);
    }
    maxima.sort_by(f64::total_cmp);

    let rl_local = spec
        .period
        .map(|t| local_rl(pooled_fit, t, spec.reference_c))
        .transpose()?;
    let rl_regional = spec.period.map(|t| empirical_quantile(&maxima, 1.0 - 1.0 / t));
    let magnitude = match (spec.magnitude, rl_local) {
        (Some(r), _) => r,
        (None, Some(r)) => r,
        (None, None) => unreachable!("validated above"),
    };
    let below = maxima.partition_point(|&m| m <= magnitude);
    let exceed = b_sim - below;
    let rp_regional = if exceed == 0 {
        warnings.push(format!(
            "no simulated regional maximum exceeded {magnitude}; the return period exceeds {b_sim}"
        ));
        f64::INFINITY
    } else {
        b_sim as f64 / exceed as f64
    };
    let quantiles = SUMMARY_PROBS
        .iter()
        .map(|&p| (p, empirical_quantile(&maxima, p)))
        .collect();
    Ok(RegionalEstimate {
        rl_local,
        rl_regional,
        magnitude,
        rp_regional,
        b_sim,
        quantiles,
        warnings,
    })
}

/// Smith model whose storms are too narrow to link any two of `coords`;
/// pairwise extremal coefficients equal 2 to double precision.
pub fn near_independence(coords: &[[f64; 2]]) -> MaxStableSpec {
    let mut min_dist = f64::INFINITY;
    for (i, a) in coords.iter().enumerate() {
        for b in &coords[i + 1..] {
            min_dist = min_dist.min((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    let s = if min_dist.is_finite() && min_dist > 0.0 { (min_dist / 40.0).powi(2) } else { 1.0 };
    MaxStableSpec::Smith { s11: s, s12: 0.0, s22: s }
}

/// Regional estimate together with the fits it was derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionalReport {
    pub locations: Vec<usize>,
    pub pooled: FitReport,
    /// Selected dependence model; `None` when it was supplied by the caller
    /// or the region has a single location.
    pub dependence: Option<DependenceFit>,
    pub spec: MaxStableSpec,
    pub estimate: RegionalEstimate,
}

/// Regional return level and period for the pooled region `locs` of `panel`.
///
/// Fits the pooled scale-GEV model, selects a max-stable model on the
/// Fréchet-transformed pooled data among `families` unless `dependence` is
/// given, and then simulates `b_sim` regional maxima.
pub fn estimate_regional<R: Rng + ?Sized>(
    panel: &BlockMaximaPanel,
    locs: &[usize],
    spec: &ReturnSpec,
    b_sim: usize,
    families: &[MaxStableFamily],
    dependence: Option<MaxStableSpec>,
    rng: &mut R,
) -> Result<RegionalReport> {
    crate::panel::validate_locations(locs, panel.n_locations())?;
    spec.validate()?;
    let pooled = fit::fit_pooled_with(panel, locs, &FitOptions::default())?;
    let coords: Vec<[f64; 2]> = locs.iter().map(|&l| panel.coords()[l]).collect();
    let (fit, ms) = match dependence {
        Some(ms) => (None, ms),
        None if locs.len() == 1 => (None, near_independence(&coords)),
        None => {
            let cov = panel.covariate().values();
            let frechet: Vec<Vec<f64>> = locs
                .iter()
                .map(|&l| gev::to_frechet(panel.column(l), &pooled.params, cov))
                .collect();
            let f = dependence::select_max_stable_from(&frechet, &coords, families)?;
            let DependenceSpec::MaxStable(ms) = f.spec else {
                return Err(Error::Selection("max-stable selection returned a bivariate model".into()));
            };
            (Some(f), ms)
        }
    };
    let estimate = regional_rl_rp(&pooled.params, &ms, &coords, spec, b_sim, rng)?;
    Ok(RegionalReport {
        locations: locs.to_vec(),
        pooled,
        dependence: fit,
        spec: ms,
        estimate,
    })
}
