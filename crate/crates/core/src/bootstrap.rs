//! Parametric bootstrap p-values for Wald homogeneity statistics.
//!
//! Two schemes are provided. [`bootstrap_global`] simulates whole-panel
//! max-stable fields once and reuses them for every tested set;
//! [`bootstrap_pairwise`] fits and simulates a bivariate extreme-value model
//! separately for each pair `{loi, d}`.

use serde::{Deserialize, Serialize};

use crate::dependence::{
    self, BivEvFamily, DependenceFit, DependenceSpec, MaxStableFamily, MaxStableSimulator,
};
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions, FitReport};
use crate::gev::{self, ScaleGevParams};
use crate::panel::BlockMaximaPanel;
use crate::seed::{self, stream};
use crate::uncertainty;
use crate::wald::{self, HypothesisSet, StatisticKind, WaldResult};

pub const DEFAULT_REPLICATES: usize = 200;

/// Fraction of failed replicates above which a record carries a warning.
pub const DROP_WARNING_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates.
    pub b: usize,
    pub seed: u64,
    pub max_stable_families: Vec<MaxStableFamily>,
    pub biv_families: Vec<BivEvFamily>,
    /// Statistic used by [`bootstrap_pairwise`]; global targets carry their own kind.
    pub statistic: StatisticKind,
    /// Start replicate refits at the null parameters that generated them.
    pub warm_start: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b: DEFAULT_REPLICATES,
            seed: 0,
            max_stable_families: MaxStableFamily::ALL.to_vec(),
            biv_families: BivEvFamily::ALL.to_vec(),
            statistic: StatisticKind::Ed,
            warm_start: true,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidInput("the number of bootstrap replicates must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one bootstrap test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTestRecord {
    pub set: HypothesisSet,
    pub observed_t: f64,
    /// Statistics of the surviving replicates, in replicate order.
    pub boot_ts: Vec<f64>,
    pub p_raw: f64,
    pub dependence: DependenceFit,
    /// Null-model parameters per location of `set`; all equal for the ED statistic.
    pub null_params: Vec<ScaleGevParams>,
    pub failed_replicates: usize,
    pub warnings: Vec<String>,
}

/// `#{b : observed <= boots[b]} / (B + 1)`.
///
/// A result of 0 means the p-value is below `1 / (B + 1)`.
pub fn compute_pvalue(observed: f64, boots: &[f64]) -> Result<f64> {
    if boots.is_empty() {
        return Err(Error::InvalidInput("no bootstrap statistics".into()));
    }
    let exceed = boots.iter().filter(|&&t| observed <= t).count();
    Ok(exceed as f64 / (boots.len() + 1) as f64)
}

/// Fits every column in `columns` separately and evaluates the Wald statistic
/// of the hypothesis that all of them are homogeneous.
fn statistic_for_columns(
    columns: &[&[f64]],
    covariate: &[f64],
    fits: &[FitReport],
    kind: StatisticKind,
) -> Result<WaldResult> {
    let params: Vec<ScaleGevParams> = fits.iter().map(|f| f.params).collect();
    let hessians: Vec<_> = fits.iter().map(|f| f.hessian).collect();
    let sigma = uncertainty::estimate_sigma_columns(columns, covariate, &params, &hessians)?;
    let order: Vec<usize> = (0..columns.len()).collect();
    wald::wald_statistic_ordered(&params, &sigma, &order, covariate.len(), kind)
}

/// Null-model fit on the columns of a tested set.
fn null_fit(columns: &[&[f64]], covariate: &[f64], kind: StatisticKind) -> Result<Vec<ScaleGevParams>> {
    let opts = FitOptions::default();
    match kind {
        StatisticKind::Ed => {
            let pooled = fit::fit_columns(columns, covariate, &opts)?;
            Ok(vec![pooled.params; columns.len()])
        }
        StatisticKind::Ls => Ok(fit::fit_local_scaling(columns, covariate, &opts)?.location_params()),
    }
}

/// Statistic of one replicate: Fréchet columns are mapped to the null margins,
/// refitted location by location and tested.
fn replicate_statistic(
    frechet: &[&[f64]],
    covariate: &[f64],
    null_params: &[ScaleGevParams],
    kind: StatisticKind,
    warm_start: bool,
) -> Result<f64> {
    let data: Vec<Vec<f64>> = frechet
        .iter()
        .zip(null_params)
        .map(|(y, th)| gev::from_frechet(y, th, covariate))
        .collect::<Result<_>>()?;
    let cols: Vec<&[f64]> = data.iter().map(|c| c.as_slice()).collect();
    let fits: Vec<FitReport> = cols
        .iter()
        .zip(null_params)
        .map(|(c, th)| {
            let opts = FitOptions {
                start: warm_start.then_some(*th),
                ..FitOptions::default()
            };
            fit::fit_scale_gev_with(c, covariate, &opts)
        })
        .collect::<Result<_>>()?;
    Ok(statistic_for_columns(&cols, covariate, &fits, kind)?.statistic)
}

/// Collects replicate statistics, dropping failures, and assembles the record.
fn finish_record(
    set: HypothesisSet,
    observed_t: f64,
    outcomes: Vec<Result<f64>>,
    dependence: DependenceFit,
    null_params: Vec<ScaleGevParams>,
) -> Result<PairTestRecord> {
    let total = outcomes.len();
    let mut boot_ts = Vec::with_capacity(total);
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(t) if t.is_finite() => boot_ts.push(t),
            Ok(t) => {
                first_error.get_or_insert_with(|| format!("non-finite statistic {t}"));
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failed = total - boot_ts.len();
    if boot_ts.is_empty() {
        return Err(Error::Test {
            set: set.locations().to_vec(),
            reason: format!(
                "all {total} bootstrap replicates failed; first failure: {}",
                first_error.unwrap_or_default()
            ),
        });
    }
    let mut warnings = Vec::new();
    if failed as f64 > DROP_WARNING_FRACTION * total as f64 {
        warnings.push(format!(
            "{failed} of {total} bootstrap replicates failed and were dropped; first failure: {}",
            first_error.unwrap_or_default()
        ));
    }
    let p_raw = compute_pvalue(observed_t, &boot_ts)?;
    Ok(PairTestRecord {
        set,
        observed_t,
        boot_ts,
        p_raw,
        dependence,
        null_params,
        failed_replicates: failed,
        warnings,
    })
}

/// Observed statistic and per-location Fréchet columns for the whole panel.
struct MarginalStage {
    fits: Vec<FitReport>,
    frechet: Vec<Vec<f64>>,
}

fn marginal_stage(panel: &BlockMaximaPanel, locs: &[usize]) -> Result<MarginalStage> {
    let cov = panel.covariate().values();
    let mut fits = Vec::with_capacity(locs.len());
    let mut frechet = Vec::with_capacity(locs.len());
    for &d in locs {
        let f = fit::fit_scale_gev_with(panel.column(d), cov, &FitOptions::default())
            .map_err(|e| e.for_target(&[d]))?;
        frechet.push(gev::to_frechet(panel.column(d), &f.params, cov));
        fits.push(f);
    }
    Ok(MarginalStage { fits, frechet })
}

/// Global bootstrap based on a max-stable model for the whole panel.
///
/// The marginal fits, dependence selection and `cfg.b` simulated panels are
/// shared by all targets. Each target is tested with the statistic kind it carries.
pub fn bootstrap_global(
    panel: &BlockMaximaPanel,
    targets: &[HypothesisSet],
    cfg: &BootstrapConfig,
) -> Result<Vec<PairTestRecord>> {
    cfg.validate()?;
    let d = panel.n_locations();
    for t in targets {
        crate::panel::validate_locations(t.locations(), d)?;
    }
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let cov = panel.covariate().values();
    let n = panel.n_years();
    let all: Vec<usize> = (0..d).collect();
    let stage = marginal_stage(panel, &all)?;

    let dep = dependence::select_max_stable_from(&stage.frechet, panel.coords(), &cfg.max_stable_families)?;
    let DependenceSpec::MaxStable(spec) = dep.spec else {
        return Err(Error::Selection("max-stable selection returned a bivariate model".into()));
    };
    let sim = MaxStableSimulator::new(&spec, panel.coords())?;
    let fields: Vec<Vec<Vec<f64>>> = (0..cfg.b)
        .map(|b| {
            let mut rng = seed::derive_rng(cfg.seed, stream::FIELDS, b as u64);
            sim.simulate(n, &mut rng)
        })
        .collect();

    targets
        .iter()
        .map(|target| {
            let locs = target.locations();
            let run = || -> Result<PairTestRecord> {
                let columns: Vec<&[f64]> = locs.iter().map(|&l| panel.column(l)).collect();
                let obs_fits: Vec<FitReport> = locs.iter().map(|&l| stage.fits[l].clone()).collect();
                let observed = statistic_for_columns(&columns, cov, &obs_fits, target.kind)?;
                let null_params = null_fit(&columns, cov, target.kind)?;
                let outcomes = fields
                    .iter()
                    .map(|field| {
                        let fr: Vec<&[f64]> = locs.iter().map(|&l| field[l].as_slice()).collect();
                        replicate_statistic(&fr, cov, &null_params, target.kind, cfg.warm_start)
                    })
                    .collect();
                finish_record(target.clone(), observed.statistic, outcomes, dep.clone(), null_params)
            };
            run().map_err(|e| e.for_target(locs))
        })
        .collect()
}

/// Pairwise bootstrap of `{loi, d}` for every `d` in `partners`, each with its
/// own bivariate extreme-value model and random stream.
pub fn bootstrap_pairwise(
    panel: &BlockMaximaPanel,
    partners: &[usize],
    cfg: &BootstrapConfig,
) -> Result<Vec<PairTestRecord>> {
    cfg.validate()?;
    let loi = panel.loi();
    crate::panel::validate_locations(partners, panel.n_locations())?;
    if partners.contains(&loi) {
        return Err(Error::InvalidInput(format!(
            "partners must exclude the location of interest {loi}"
        )));
    }
    let cov = panel.covariate().values();
    let n = panel.n_years();
    let mut needed = vec![loi];
    needed.extend_from_slice(partners);
    let stage = marginal_stage(panel, &needed)?;

    partners
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let set = HypothesisSet::new(vec![loi, d], cfg.statistic)?;
            let locs = set.locations().to_vec();
            // stage index of each sorted location
            let idx: Vec<usize> = locs.iter().map(|&l| if l == loi { 0 } else { i + 1 }).collect();
            let run = || -> Result<PairTestRecord> {
                let columns: Vec<&[f64]> = locs.iter().map(|&l| panel.column(l)).collect();
                let obs_fits: Vec<FitReport> = idx.iter().map(|&j| stage.fits[j].clone()).collect();
                let observed = statistic_for_columns(&columns, cov, &obs_fits, set.kind)?;
                let dep = dependence::select_biv_ev_from(
                    &stage.frechet[idx[0]],
                    &stage.frechet[idx[1]],
                    &cfg.biv_families,
                )?;
                let DependenceSpec::Bivariate(spec) = dep.spec else {
                    return Err(Error::Selection("bivariate selection returned a max-stable model".into()));
                };
                let null_params = null_fit(&columns, cov, set.kind)?;
                let pair_seed = seed::derive_seed(cfg.seed, stream::PAIR, d as u64);
                let outcomes = (0..cfg.b)
                    .map(|b| {
                        let mut rng = seed::derive_rng(pair_seed, stream::PAIR, b as u64);
                        let (y1, y2) = dependence::simulate_biv_ev(&spec, n, &mut rng)?;
                        replicate_statistic(&[&y1, &y2], cov, &null_params, set.kind, cfg.warm_start)
                    })
                    .collect();
                finish_record(set.clone(), observed.statistic, outcomes, dep, null_params)
            };
            run().map_err(|e| e.for_target(&locs))
        })
        .collect()
}

/// Every pair `{loi, d}` with `d != loi`, as hypothesis sets.
pub fn loi_pairs(panel: &BlockMaximaPanel, kind: StatisticKind) -> Result<Vec<HypothesisSet>> {
    let loi = panel.loi();
    (0..panel.n_locations())
        .filter(|&d| d != loi)
        .map(|d| HypothesisSet::new(vec![loi, d], kind))
        .collect()
}
