//! Monte Carlo study on a 4×4 grid: scenario generation, the three bootstrap
//! procedures, and error-rate, power and return-level metrics.
//!
//! Grid cells carry labels 1 to 16 in row-major order; label `l` sits at
//! coordinates `((l - 1) % 4, (l - 1) / 4)` with unit spacing. Internally
//! locations are 0-based, so label 10 is index 9.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{self, BootstrapConfig, PairTestRecord};
use crate::dependence::{MaxStableSimulator, MaxStableSpec};
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions};
use crate::gev::{self, ScaleGevParams};
use crate::multitest::{self, AdjustMethod};
use crate::panel::{BlockMaximaPanel, CovariateSeries};
use crate::return_levels;
use crate::seed::{self, stream};
use crate::wald::{HypothesisSet, StatisticKind};

pub const GRID_SIDE: usize = 4;
pub const DEFAULT_YEARS: usize = 75;
/// Final covariate value of the default series and the default reference climate.
pub const DEFAULT_REFERENCE_C: f64 = 0.925;
pub const DEFAULT_RETURN_PERIOD: f64 = 100.0;

pub const C_MU_GRID: [f64; 5] = [-3.0, -1.5, 0.0, 1.5, 3.0];
pub const C_SIGMA_GRID: [f64; 5] = [0.7, 0.85, 1.0, 1.15, 1.3];
pub const C_GAMMA_GRID: [f64; 3] = [-0.1, 0.0, 0.1];
pub const C_ALPHA_GRID: [f64; 3] = [-1.0, 0.0, 1.0];

/// 0-based index of a 1-based grid label.
pub fn label_index(label: usize) -> usize {
    label - 1
}

pub fn grid_coords() -> Vec<[f64; 2]> {
    (0..GRID_SIDE * GRID_SIDE)
        .map(|i| [(i % GRID_SIDE) as f64, (i / GRID_SIDE) as f64])
        .collect()
}

/// Smooth increasing covariate `end * ((t - 1) / (n - 1))^2`, `t = 1..n`.
pub fn default_covariate(n: usize, end: f64) -> Vec<f64> {
    if n == 1 {
        return vec![end];
    }
    (0..n)
        .map(|t| end * (t as f64 / (n - 1) as f64).powi(2))
        .collect()
}

pub fn base_params() -> ScaleGevParams {
    ScaleGevParams {
        mu: 20.0,
        sigma: 5.5,
        gamma: 0.1,
        alpha: 1.5,
    }
}

/// Shift of the deviating locations: `mu + c_mu`, `sigma * c_sigma`,
/// `gamma + c_gamma`, `alpha + c_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub c_mu: f64,
    pub c_sigma: f64,
    pub c_gamma: f64,
    pub c_alpha: f64,
}

impl Deviation {
    pub const NONE: Deviation = Deviation {
        c_mu: 0.0,
        c_sigma: 1.0,
        c_gamma: 0.0,
        c_alpha: 0.0,
    };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }

    pub fn apply(&self, base: &ScaleGevParams) -> ScaleGevParams {
        ScaleGevParams {
            mu: base.mu + self.c_mu,
            sigma: base.sigma * self.c_sigma,
            gamma: base.gamma + self.c_gamma,
            alpha: base.alpha + self.c_alpha,
        }
    }
}

/// Which cells deviate from the base parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviatingSet {
    /// Labels 4 and 8.
    Two,
    /// Labels 1, 2, 3, 4, 8, 12 and 16.
    Seven,
}

impl DeviatingSet {
    pub fn labels(self) -> &'static [usize] {
        match self {
            DeviatingSet::Two => &[4, 8],
            DeviatingSet::Seven => &[1, 2, 3, 4, 8, 12, 16],
        }
    }

    pub fn indices(self) -> Vec<usize> {
        self.labels().iter().map(|&l| label_index(l)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub coords: Vec<[f64; 2]>,
    pub covariate: Vec<f64>,
    pub base: ScaleGevParams,
    /// 0-based indices of the deviating locations; empty for the homogeneous model.
    pub deviating: Vec<usize>,
    pub deviating_set: Option<DeviatingSet>,
    pub deviation: Deviation,
    pub dependence: MaxStableSpec,
    pub loi: usize,
    pub reference_c: f64,
    pub return_period: f64,
}

impl Scenario {
    /// The homogeneous model on the default grid with `n` years.
    pub fn homogeneous(n: usize) -> Self {
        Self {
            coords: grid_coords(),
            covariate: default_covariate(n, DEFAULT_REFERENCE_C),
            base: base_params(),
            deviating: Vec::new(),
            deviating_set: None,
            deviation: Deviation::NONE,
            dependence: MaxStableSpec::Smith {
                s11: 0.4,
                s12: 0.2,
                s22: 0.9,
            },
            loi: label_index(10),
            reference_c: DEFAULT_REFERENCE_C,
            return_period: DEFAULT_RETURN_PERIOD,
        }
    }

    /// The default grid with `set` shifted by `deviation`; a zero deviation
    /// gives the homogeneous model.
    pub fn deviating(n: usize, set: DeviatingSet, deviation: Deviation) -> Self {
        let mut s = Self::homogeneous(n);
        if !deviation.is_none() {
            s.deviating = set.indices();
            s.deviating_set = Some(set);
            s.deviation = deviation;
        }
        s
    }

    pub fn n_years(&self) -> usize {
        self.covariate.len()
    }

    pub fn n_locations(&self) -> usize {
        self.coords.len()
    }

    pub fn location_params(&self, d: usize) -> ScaleGevParams {
        if self.deviating.contains(&d) {
            self.deviation.apply(&self.base)
        } else {
            self.base
        }
    }

    /// Short identifier such as `homogeneous` or `two_mu3_sigma1.3_gamma0_alpha0`.
    pub fn label(&self) -> String {
        match self.deviating_set {
            None => "homogeneous".into(),
            Some(set) => {
                let d = &self.deviation;
                let name = match set {
                    DeviatingSet::Two => "two",
                    DeviatingSet::Seven => "seven",
                };
                format!(
                    "{name}_mu{}_sigma{}_gamma{}_alpha{}",
                    d.c_mu, d.c_sigma, d.c_gamma, d.c_alpha
                )
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_locations();
        if d < 2 {
            return Err(Error::InvalidInput("a scenario needs at least two locations".into()));
        }
        crate::panel::validate_locations(&[self.loi], d)?;
        if !self.deviating.is_empty() {
            crate::panel::validate_locations(&self.deviating, d)?;
        }
        if self.deviating.contains(&self.loi) {
            return Err(Error::InvalidInput("the location of interest cannot deviate".into()));
        }
        for i in 0..d {
            let p = self.location_params(i);
            if !p.is_valid() {
                return Err(Error::InvalidInput(format!("invalid parameters {p:?} at location {i}")));
            }
        }
        self.dependence.validate()?;
        if !(self.return_period > 1.0) {
            return Err(Error::Domain(format!("return period must exceed 1, got {}", self.return_period)));
        }
        Ok(())
    }

    /// Location-wise truth of the return level at the location of interest.
    pub fn true_return_level(&self) -> Result<f64> {
        return_levels::local_rl(&self.location_params(self.loi), self.return_period, self.reference_c)
    }
}

/// Every heterogeneous scenario of the full design (224 per deviating set).
pub fn full_design(n: usize, set: DeviatingSet) -> Vec<Scenario> {
    let mut out = Vec::new();
    for &c_gamma in &C_GAMMA_GRID {
        for &c_alpha in &C_ALPHA_GRID {
            for &c_sigma in &C_SIGMA_GRID {
                for &c_mu in &C_MU_GRID {
                    let dev = Deviation {
                        c_mu,
                        c_sigma,
                        c_gamma,
                        c_alpha,
                    };
                    if !dev.is_none() {
                        out.push(Scenario::deviating(n, set, dev));
                    }
                }
            }
        }
    }
    out
}

/// Six-scenario desk slice at `c_gamma = c_alpha = 0`: the homogeneous
/// centre, the four `(c_mu, c_sigma)` corners and the moderate point
/// `(1.5, 1)`.
pub fn desk_design(n: usize, set: DeviatingSet) -> Vec<Scenario> {
    let point = |c_mu, c_sigma| Deviation {
        c_mu,
        c_sigma,
        c_gamma: 0.0,
        c_alpha: 0.0,
    };
    let mut out = vec![Scenario::homogeneous(n)];
    for (m, s) in [(-3.0, 0.7), (-3.0, 1.3), (3.0, 0.7), (3.0, 1.3), (1.5, 1.0)] {
        out.push(Scenario::deviating(n, set, point(m, s)));
    }
    out
}

/// Simulates one panel from the scenario.
pub fn generate_scenario_data<R: rand::Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<BlockMaximaPanel> {
    s.validate()?;
    let sim = MaxStableSimulator::new(&s.dependence, &s.coords)?;
    let frechet = sim.simulate(s.n_years(), rng);
    let maxima = frechet
        .iter()
        .enumerate()
        .map(|(d, y)| gev::from_frechet(y, &s.location_params(d), &s.covariate))
        .collect::<Result<Vec<_>>>()?;
    let ids = (1..=s.n_locations()).map(|l| l.to_string()).collect();
    BlockMaximaPanel::new(
        maxima,
        CovariateSeries::new(s.covariate.clone())?,
        s.coords.clone(),
        ids,
        s.loi,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    /// Global max-stable bootstrap of the whole region.
    B1,
    /// Global max-stable bootstrap of every pair with the location of interest.
    B2,
    /// Pairwise bivariate bootstrap of every pair with the location of interest.
    B3,
}

/// Data used for the return-level estimate at the location of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMethod {
    Loi,
    Full,
    MsIm,
    MsHolm,
    MsBh,
    BivIm,
    BivHolm,
    BivBh,
}

impl PoolingMethod {
    fn from_parts(procedure: Procedure, method: AdjustMethod) -> Option<Self> {
        Some(match (procedure, method) {
            (Procedure::B2, AdjustMethod::Im) => PoolingMethod::MsIm,
            (Procedure::B2, AdjustMethod::Holm) => PoolingMethod::MsHolm,
            (Procedure::B2, AdjustMethod::Bh) => PoolingMethod::MsBh,
            (Procedure::B3, AdjustMethod::Im) => PoolingMethod::BivIm,
            (Procedure::B3, AdjustMethod::Holm) => PoolingMethod::BivHolm,
            (Procedure::B3, AdjustMethod::Bh) => PoolingMethod::BivBh,
            (Procedure::B1, _) => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub reps: usize,
    pub bootstrap: BootstrapConfig,
    pub procedures: Vec<Procedure>,
    pub methods: Vec<AdjustMethod>,
    pub alpha: f64,
    /// Master seed for data generation and per-replication bootstrap seeds.
    pub seed: u64,
    /// Estimate return levels from the pooled regions.
    pub return_levels: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            reps: 200,
            bootstrap: BootstrapConfig {
                b: 99,
                ..BootstrapConfig::default()
            },
            procedures: vec![Procedure::B1, Procedure::B2, Procedure::B3],
            methods: AdjustMethod::ALL.to_vec(),
            alpha: 0.1,
            seed: 0,
            return_levels: true,
        }
    }
}

/// Decisions of one pairwise procedure under one adjustment method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDecisions {
    pub procedure: Procedure,
    pub method: AdjustMethod,
    /// Rejection flag per partner, aligned with [`Replication::partners`].
    pub rejected: Vec<bool>,
}

/// Everything recorded for one simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub partners: Vec<usize>,
    pub b1_p: Option<f64>,
    pub b2_raw: Option<Vec<f64>>,
    pub b3_raw: Option<Vec<f64>>,
    pub decisions: Vec<PairDecisions>,
    pub return_levels: Vec<(PoolingMethod, f64)>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub procedure: Procedure,
    pub method: AdjustMethod,
    pub fwer: f64,
    pub fdr: f64,
    /// Mean fraction of deviating partners rejected; `None` without deviating partners.
    pub power: Option<f64>,
    /// Replications contributing.
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    pub method: PoolingMethod,
    pub mse: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    pub scenario: String,
    pub deviation: Deviation,
    pub deviating_set: Option<DeviatingSet>,
    pub alpha: f64,
    pub reps: usize,
    /// Rejection fraction of the global test: the level under the
    /// homogeneous model, the power otherwise.
    pub b1_rejection_rate: Option<f64>,
    pub b1_reps: usize,
    pub rates: Vec<ErrorRates>,
    pub mse: Vec<MseEntry>,
    pub failed_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub metrics: StudyMetrics,
    pub replications: Vec<Replication>,
}

fn raw_pvalues(records: &[PairTestRecord]) -> Vec<f64> {
    records.iter().map(|r| r.p_raw).collect()
}

fn decisions_for(procedure: Procedure, raw: &[f64], methods: &[AdjustMethod], alpha: f64) -> Result<Vec<PairDecisions>> {
    methods
        .iter()
        .map(|&m| {
            Ok(PairDecisions {
                procedure,
                method: m,
                rejected: multitest::adjust(m, raw)?.rejections(alpha),
            })
        })
        .collect()
}

fn pooled_rl(panel: &BlockMaximaPanel, locs: &[usize], s: &Scenario) -> Result<f64> {
    let fit = fit::fit_pooled_with(panel, locs, &FitOptions::default())?;
    return_levels::local_rl(&fit.params, s.return_period, s.reference_c)
}

/// Runs the configured procedures on one simulated panel.
pub fn run_replication(s: &Scenario, cfg: &StudyConfig, index: usize) -> Result<Replication> {
    let mut rng = seed::derive_rng(cfg.seed, stream::SCENARIO, index as u64);
    let panel = generate_scenario_data(s, &mut rng)?;
    let boot_cfg = BootstrapConfig {
        seed: seed::derive_seed(cfg.seed, stream::STUDY, index as u64),
        ..cfg.bootstrap.clone()
    };
    let d = panel.n_locations();
    let partners: Vec<usize> = (0..d).filter(|&l| l != s.loi).collect();
    let mut rep = Replication {
        index,
        partners: partners.clone(),
        b1_p: None,
        b2_raw: None,
        b3_raw: None,
        decisions: Vec::new(),
        return_levels: Vec::new(),
        errors: Vec::new(),
    };

    let want = |p| cfg.procedures.contains(&p);
    if want(Procedure::B1) || want(Procedure::B2) {
        let mut targets = Vec::new();
        if want(Procedure::B1) {
            targets.push(HypothesisSet::new((0..d).collect(), StatisticKind::Ed)?);
        }
        if want(Procedure::B2) {
            targets.extend(bootstrap::loi_pairs(&panel, boot_cfg.statistic)?);
        }
        match bootstrap::bootstrap_global(&panel, &targets, &boot_cfg) {
            Ok(records) => {
                let mut rest = &records[..];
                if want(Procedure::B1) {
                    rep.b1_p = Some(records[0].p_raw);
                    rest = &records[1..];
                }
                if want(Procedure::B2) {
                    let raw = raw_pvalues(rest);
                    rep.decisions.extend(decisions_for(Procedure::B2, &raw, &cfg.methods, cfg.alpha)?);
                    rep.b2_raw = Some(raw);
                }
            }
            Err(e) => rep.errors.push(format!("max-stable bootstrap: {e}")),
        }
    }
    if want(Procedure::B3) {
        match bootstrap::bootstrap_pairwise(&panel, &partners, &boot_cfg) {
            Ok(records) => {
                let raw = raw_pvalues(&records);
                rep.decisions.extend(decisions_for(Procedure::B3, &raw, &cfg.methods, cfg.alpha)?);
                rep.b3_raw = Some(raw);
            }
            Err(e) => rep.errors.push(format!("bivariate bootstrap: {e}")),
        }
    }

    if cfg.return_levels {
        let mut regions: Vec<(PoolingMethod, Vec<usize>)> = vec![
            (PoolingMethod::Loi, vec![s.loi]),
            (PoolingMethod::Full, (0..d).collect()),
        ];
        for dec in &rep.decisions {
            if let Some(m) = PoolingMethod::from_parts(dec.procedure, dec.method) {
                let mut region = vec![s.loi];
                region.extend(partners.iter().zip(&dec.rejected).filter(|(_, r)| !**r).map(|(p, _)| *p));
                region.sort_unstable();
                regions.push((m, region));
            }
        }
        for (m, region) in regions {
            match pooled_rl(&panel, &region, s) {
                Ok(rl) => rep.return_levels.push((m, rl)),
                Err(e) => rep.errors.push(format!("{m:?} return level: {e}")),
            }
        }
    }
    Ok(rep)
}

/// Runs `cfg.reps` replications of scenario `s` and tallies the metrics.
///
/// Replication `j` draws its data from stream `j` of the scenario tag and its
/// bootstrap from a seed derived for `j`, so results do not depend on how the
/// replications are scheduled.
pub fn run_study(s: &Scenario, cfg: &StudyConfig) -> Result<StudyResult> {
    run_study_with_progress(s, cfg, |_, _| {})
}

/// [`run_study`] calling `progress(done, total)` after each replication.
pub fn run_study_with_progress<F: FnMut(usize, usize)>(
    s: &Scenario,
    cfg: &StudyConfig,
    mut progress: F,
) -> Result<StudyResult> {
    s.validate()?;
    cfg.bootstrap.validate()?;
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("a study needs at least one replication".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    let mut replications = Vec::with_capacity(cfg.reps);
    for j in 0..cfg.reps {
        let rep = match run_replication(s, cfg, j) {
            Ok(r) => r,
            Err(e) => Replication {
                index: j,
                partners: Vec::new(),
                b1_p: None,
                b2_raw: None,
                b3_raw: None,
                decisions: Vec::new(),
                return_levels: Vec::new(),
                errors: vec![e.to_string()],
            },
        };
        replications.push(rep);
        progress(j + 1, cfg.reps);
    }
    let truth = s.true_return_level()?;
    let metrics = tally(s, cfg.alpha, truth, &replications);
    Ok(StudyResult { metrics, replications })
}

/// Metrics as exact functions of the recorded decisions.
pub fn tally(s: &Scenario, alpha: f64, true_rl: f64, reps: &[Replication]) -> StudyMetrics {
    let b1: Vec<f64> = reps.iter().filter_map(|r| r.b1_p).collect();
    let b1_rejection_rate =
        (!b1.is_empty()).then(|| b1.iter().filter(|&&p| p <= alpha).count() as f64 / b1.len() as f64);

    let mut keys: Vec<(Procedure, AdjustMethod)> = reps
        .iter()
        .flat_map(|r| r.decisions.iter().map(|d| (d.procedure, d.method)))
        .collect();
    keys.sort();
    keys.dedup();

    let rates = keys
        .into_iter()
        .map(|(procedure, method)| {
            let (mut fwer, mut fdr, mut power, mut count) = (0.0, 0.0, 0.0, 0usize);
            for r in reps {
                let Some(dec) = r.decisions.iter().find(|d| d.procedure == procedure && d.method == method) else {
                    continue;
                };
                count += 1;
                let (mut false_rej, mut true_rej, mut total_rej) = (0usize, 0usize, 0usize);
                for (p, &rej) in r.partners.iter().zip(&dec.rejected) {
                    if rej {
                        total_rej += 1;
                        if s.deviating.contains(p) {
                            true_rej += 1;
                        } else {
                            false_rej += 1;
                        }
                    }
                }
                if false_rej > 0 {
                    fwer += 1.0;
                }
                if total_rej > 0 {
                    fdr += false_rej as f64 / total_rej as f64;
                }
                if !s.deviating.is_empty() {
                    power += true_rej as f64 / s.deviating.len() as f64;
                }
            }
            let c = count.max(1) as f64;
            ErrorRates {
                procedure,
                method,
                fwer: fwer / c,
                fdr: fdr / c,
                power: (!s.deviating.is_empty()).then_some(power / c),
                reps: count,
            }
        })
        .collect();

    let mut methods: Vec<PoolingMethod> = reps
        .iter()
        .flat_map(|r| r.return_levels.iter().map(|(m, _)| *m))
        .collect();
    methods.sort();
    methods.dedup();
    let mse = methods
        .into_iter()
        .map(|m| {
            let errs: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.return_levels.iter().find(|(k, _)| *k == m))
                .map(|(_, rl)| (rl - true_rl).powi(2))
                .collect();
            MseEntry {
                method: m,
                mse: errs.iter().sum::<f64>() / errs.len() as f64,
                reps: errs.len(),
            }
        })
        .collect();

    StudyMetrics {
        scenario: s.label(),
        deviation: s.deviation,
        deviating_set: s.deviating_set,
        alpha,
        reps: reps.len(),
        b1_rejection_rate,
        b1_reps: b1.len(),
        rates,
        mse,
        failed_replications: reps.iter().filter(|r| !r.errors.is_empty()).count(),
    }
}

/// Minimum, maximum and mean of one metric across scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub procedure: Procedure,
    pub method: AdjustMethod,
    pub metric: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub scenarios: usize,
}

/// Aggregates FDR, FWER and power per procedure and method across scenarios.
pub fn summarize(metrics: &[StudyMetrics]) -> Result<Vec<SummaryRow>> {
    if metrics.is_empty() {
        return Err(Error::InvalidInput("nothing to summarize".into()));
    }
    let mut keys: Vec<(Procedure, AdjustMethod)> = metrics
        .iter()
        .flat_map(|m| m.rates.iter().map(|r| (r.procedure, r.method)))
        .collect();
    keys.sort();
    keys.dedup();
    let mut rows = Vec::new();
    for (procedure, method) in keys {
        let rates: Vec<&ErrorRates> = metrics
            .iter()
            .flat_map(|m| m.rates.iter())
            .filter(|r| r.procedure == procedure && r.method == method)
            .collect();
        let metric_values: [(&str, Vec<f64>); 3] = [
            ("fdr", rates.iter().map(|r| r.fdr).collect()),
            ("fwer", rates.iter().map(|r| r.fwer).collect()),
            ("power", rates.iter().filter_map(|r| r.power).collect()),
        ];
        for (name, values) in metric_values {
            if values.is_empty() {
                continue;
            }
            rows.push(SummaryRow {
                procedure,
                method,
                metric: name.into(),
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: values.iter().sum::<f64>() / values.len() as f64,
                scenarios: values.len(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::MaxStableFamily;

    #[test]
    fn design_sizes_and_labels() {
        assert_eq!(full_design(75, DeviatingSet::Two).len(), 224);
        assert_eq!(full_design(75, DeviatingSet::Seven).len(), 224);
        let desk = desk_design(75, DeviatingSet::Two);
        assert_eq!(desk.len(), 6);
        assert!(desk[0].deviating.is_empty());
        assert_eq!(DeviatingSet::Two.indices(), vec![3, 7]);
        let s = Scenario::homogeneous(75);
        assert_eq!(s.loi, 9);
        assert_eq!(s.coords[9], [1.0, 2.0]);
        assert!((s.covariate[74] - 0.925).abs() < 1e-12);
        assert_eq!(s.covariate[0], 0.0);
        assert!((s.true_return_level().unwrap() - 55.87).abs() < 0.01);
    }

    #[test]
    fn scenario_data_is_deterministic_and_shifted() {
        let s = Scenario::deviating(
            75,
            DeviatingSet::Two,
            Deviation {
                c_mu: 0.0,
                c_sigma: 1.3,
                c_gamma: 0.0,
                c_alpha: 0.0,
            },
        );
        let a = generate_scenario_data(&s, &mut seed::derive_rng(1, 0, 0)).unwrap();
        let b = generate_scenario_data(&s, &mut seed::derive_rng(1, 0, 0)).unwrap();
        assert_eq!(a, b);
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let (mut dev, mut hom) = (0.0, 0.0);
        for k in 0..40 {
            let p = generate_scenario_data(&s, &mut seed::derive_rng(2, 0, k)).unwrap();
            dev += sd(p.column(3)) + sd(p.column(7));
            hom += sd(p.column(0)) + sd(p.column(5));
        }
        assert!(dev > hom);
    }

    fn tiny_config() -> StudyConfig {
        StudyConfig {
            reps: 2,
            bootstrap: BootstrapConfig {
                b: 4,
                max_stable_families: vec![MaxStableFamily::Smith],
                ..BootstrapConfig::default()
            },
            seed: 11,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn study_bookkeeping() {
        let s = Scenario::deviating(
            40,
            DeviatingSet::Two,
            Deviation {
                c_mu: 3.0,
                c_sigma: 1.3,
                c_gamma: 0.0,
                c_alpha: 0.0,
            },
        );
        let cfg = tiny_config();
        let res = run_study(&s, &cfg).unwrap();
        let m = &res.metrics;
        assert_eq!(m.reps, 2);
        assert_eq!(m.rates.len(), 6);
        for r in &m.rates {
            assert!((0.0..=1.0).contains(&r.fwer) && (0.0..=1.0).contains(&r.fdr));
            assert!(r.power.is_some());
        }
        assert_eq!(m.mse.len(), 8);
        // nested decisions per replication
        for rep in &res.replications {
            for proc_ in [Procedure::B2, Procedure::B3] {
                let get = |meth| {
                    rep.decisions
                        .iter()
                        .find(|d| d.procedure == proc_ && d.method == meth)
                        .map(|d| d.rejected.clone())
                };
                if let (Some(h), Some(b), Some(i)) = (get(AdjustMethod::Holm), get(AdjustMethod::Bh), get(AdjustMethod::Im)) {
                    for k in 0..h.len() {
                        assert!(!h[k] || b[k]);
                        assert!(!b[k] || i[k]);
                    }
                }
            }
        }
        let again = run_study(&s, &cfg).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn summary_of_one_scenario_is_flat() {
        let s = Scenario::homogeneous(30);
        let cfg = StudyConfig {
            procedures: vec![Procedure::B3],
            return_levels: false,
            reps: 1,
            ..tiny_config()
        };
        let res = run_study(&s, &cfg).unwrap();
        let rows = summarize(std::slice::from_ref(&res.metrics)).unwrap();
        assert!(!rows.is_empty());
        for r in rows {
            assert_eq!(r.min, r.max);
            assert_eq!(r.min, r.mean);
        }
        assert!(summarize(&[]).is_err());
    }
}
