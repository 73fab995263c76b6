//! Subcommand implementations.

use std::fs::File;
use std::path::Path;

use poolreg::bootstrap::{self, BootstrapConfig, PairTestRecord, DEFAULT_REPLICATES};
use poolreg::dependence::DependenceFit;
use poolreg::fit::{self, FitOptions, FitReport};
use poolreg::gev::ScaleGevParams;
use poolreg::multitest::{self, AdjustMethod, PoolingReport};
use poolreg::panel::{BlockMaximaPanel, CovariateSeries};
use poolreg::return_levels::{self, RegionalReport, ReturnSpec};
use poolreg::seed::{self, stream};
use poolreg::sim::{self, DeviatingSet, PoolingMethod, Procedure, Scenario, StudyConfig, StudyResult};
use poolreg::wald::{HypothesisSet, StatisticKind};
use serde::Serialize;

use crate::config::{BootstrapChoice, Settings};
use crate::error::CliError;
use crate::ingest::{self, PanelData};
use crate::output::{fmt_bool, fmt_p, fmt_sig, json_bytes, write_atomic, Table};
use crate::{DesignChoice, FitArgs, GlobalArgs, PairsArgs, RegionalArgs, SetChoice, SimulateArgs};

/// Ingested panel with the core representation built from it.
struct Loaded {
    data: PanelData,
    panel: BlockMaximaPanel,
    /// False when placeholder coordinates were used.
    has_coords: bool,
}

impl Loaded {
    fn require_coords(&self) -> Result<(), CliError> {
        if self.has_coords {
            Ok(())
        } else {
            Err(CliError::Usage(
                "a coordinates file is required for max-stable models (--coords)".into(),
            ))
        }
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn load(settings: &Settings, loi_required: bool) -> Result<Loaded, CliError> {
    let path = settings.panel_path()?;
    let source = path.display().to_string();
    let data = ingest::read_panel(open(path)?, &source)?;

    let coords = match &settings.coords {
        Some(c) => {
            let csrc = c.display().to_string();
            let map = ingest::read_coords(open(c)?, &csrc)?;
            ingest::align_coords(&data, &map, &csrc)?
        }
        // distinct placeholders for computations that ignore distances
        None => (0..data.location_ids.len()).map(|i| [i as f64, 0.0]).collect(),
    };

    let loi = match &settings.loi {
        Some(id) => location_index(&data, id)?,
        None if loi_required => {
            return Err(CliError::Usage("a location of interest is required (--loi)".into()))
        }
        None => 0,
    };

    let invalid = |e: poolreg::Error| CliError::Ingest {
        file: source.clone(),
        line: 0,
        message: e.to_string(),
    };
    let covariate = CovariateSeries::new(data.covariate.clone()).map_err(invalid)?;
    let panel = BlockMaximaPanel::new(
        data.maxima.clone(),
        covariate,
        coords,
        data.location_ids.clone(),
        loi,
    )
    .map_err(invalid)?;
    Ok(Loaded {
        data,
        panel,
        has_coords: settings.coords.is_some(),
    })
}

fn location_index(data: &PanelData, id: &str) -> Result<usize, CliError> {
    data.location_index(id).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown location {id}; available: {}",
            data.location_ids.join(", ")
        ))
    })
}

/// Parses a comma-separated id list; `all` selects every location.
fn location_list(data: &PanelData, spec: &str) -> Result<Vec<usize>, CliError> {
    if spec.trim() == "all" {
        return Ok((0..data.location_ids.len()).collect());
    }
    let mut out: Vec<usize> = spec
        .split(',')
        .map(|s| location_index(data, s.trim()))
        .collect::<Result<_, _>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn ids(data: &PanelData, locs: &[usize]) -> Vec<String> {
    locs.iter().map(|&l| data.location_ids[l].clone()).collect()
}

/// Replaces location indices in a core error by the panel's identifiers.
fn annotate(err: poolreg::Error, data: &PanelData) -> CliError {
    match err {
        poolreg::Error::Target { target, source } => CliError::AtLocations {
            locations: ids(data, &target).join(", "),
            source: *source,
        },
        other => CliError::Numerical(other),
    }
}

fn bootstrap_config(settings: &Settings) -> BootstrapConfig {
    BootstrapConfig {
        b: settings.b,
        seed: settings.seed,
        max_stable_families: settings.max_stable_families.clone(),
        biv_families: settings.bivariate_families.clone(),
        statistic: settings.statistic.into(),
        warm_start: true,
    }
}

fn emit(settings: &Settings, stem: &str, table: &Table, json: &[u8], quiet: bool) -> Result<(), CliError> {
    write_atomic(&settings.out_dir, &format!("{stem}.csv"), &table.to_csv()?)?;
    write_atomic(&settings.out_dir, &format!("{stem}.json"), json)?;
    if !quiet {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn param_cells(p: &ScaleGevParams) -> Vec<String> {
    p.to_array().iter().map(|&v| fmt_sig(v)).collect()
}

#[derive(Serialize)]
struct FitRow {
    kind: &'static str,
    locations: Vec<String>,
    fit: Option<FitReport>,
    error: Option<String>,
}

#[derive(Serialize)]
struct FitJson {
    schema: &'static str,
    years: Vec<i64>,
    rows: Vec<FitRow>,
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let settings = Settings::load(&args.common, DEFAULT_REPLICATES)?;
    let Loaded { data, panel, .. } = load(&settings, false)?;
    let cov = panel.covariate().values();
    let opts = FitOptions::default();

    let mut rows = Vec::new();
    for d in 0..panel.n_locations() {
        let r = fit::fit_scale_gev_with(panel.column(d), cov, &opts);
        rows.push(FitRow {
            kind: "local",
            locations: ids(&data, &[d]),
            error: r.as_ref().err().map(|e| e.to_string()),
            fit: r.ok(),
        });
    }
    if let Some(spec) = &args.pooled {
        let locs = location_list(&data, spec)?;
        let r = fit::fit_pooled_with(&panel, &locs, &opts);
        rows.push(FitRow {
            kind: "pooled",
            locations: ids(&data, &locs),
            error: r.as_ref().err().map(|e| e.to_string()),
            fit: r.ok(),
        });
    }

    let mut table = Table::new(&[
        "kind", "location_id", "mu", "sigma", "gamma", "alpha", "neg_log_lik", "converged", "error",
    ]);
    for r in &rows {
        let mut row = vec![r.kind.to_string(), r.locations.join(";")];
        match &r.fit {
            Some(f) => {
                row.extend(param_cells(&f.params));
                row.push(fmt_sig(f.neg_log_lik));
                row.push(fmt_bool(f.converged).into());
                row.push(String::new());
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), 5));
                row.push("false".into());
                row.push(r.error.clone().unwrap_or_default());
            }
        }
        table.push(row);
    }
    let failed = rows.iter().filter(|r| r.fit.is_none()).count();
    let json = json_bytes(&FitJson {
        schema: "poolreg.fit/1",
        years: data.years.clone(),
        rows,
    })?;
    emit(&settings, "fit", &table, &json, args.quiet)?;
    if failed > 0 {
        return Err(CliError::PartialFit(failed));
    }
    Ok(())
}

#[derive(Serialize)]
struct PartnerJson {
    partner: String,
    observed_t: f64,
    p_raw: f64,
    p_holm: f64,
    p_bh: f64,
    failed_replicates: usize,
    null_params: Vec<ScaleGevParams>,
    dependence: DependenceFit,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct DecisionJson {
    method: AdjustMethod,
    rejected: Vec<String>,
    recommended: Vec<String>,
}

#[derive(Serialize)]
struct PairsJson {
    schema: &'static str,
    loi: String,
    bootstrap: &'static str,
    statistic: StatisticKind,
    replicates: usize,
    seed: u64,
    alpha: f64,
    partners: Vec<PartnerJson>,
    decisions: Vec<DecisionJson>,
}

fn bootstrap_name(b: BootstrapChoice) -> &'static str {
    match b {
        BootstrapChoice::Ms => "ms",
        BootstrapChoice::Biv => "biv",
    }
}

pub fn test_pairs(args: &PairsArgs) -> Result<(), CliError> {
    let settings = Settings::load(&args.common, DEFAULT_REPLICATES)?;
    let loaded = load(&settings, true)?;
    if settings.bootstrap == BootstrapChoice::Ms {
        loaded.require_coords()?;
    }
    let Loaded { data, panel, .. } = loaded;
    if panel.n_locations() < 2 {
        return Err(CliError::Usage("pairwise tests need at least two locations".into()));
    }
    let loi = panel.loi();
    let cfg = bootstrap_config(&settings);
    let records: Vec<PairTestRecord> = match settings.bootstrap {
        BootstrapChoice::Ms => {
            let targets = bootstrap::loi_pairs(&panel, cfg.statistic).map_err(CliError::Numerical)?;
            bootstrap::bootstrap_global(&panel, &targets, &cfg)
        }
        BootstrapChoice::Biv => {
            let partners: Vec<usize> = (0..panel.n_locations()).filter(|&d| d != loi).collect();
            bootstrap::bootstrap_pairwise(&panel, &partners, &cfg)
        }
    }
    .map_err(|e| annotate(e, &data))?;

    let methods = settings.method.methods();
    let reports: Vec<PoolingReport> = methods
        .iter()
        .map(|&m| multitest::recommend(loi, &records, m, settings.alpha))
        .collect::<Result<_, _>>()?;

    let mut header = vec!["partner_id", "observed_t", "p_raw", "p_holm", "p_bh"];
    let reject_cols: Vec<String> = methods.iter().map(|m| format!("rejected_{}", method_name(*m))).collect();
    header.extend(reject_cols.iter().map(String::as_str));
    let mut table = Table::new(&header);
    for (i, row) in reports[0].rows.iter().enumerate() {
        let mut cells = vec![
            data.location_ids[row.partner].clone(),
            fmt_sig(row.observed_t),
            fmt_p(row.p_raw),
            fmt_p(row.p_holm),
            fmt_p(row.p_bh),
        ];
        cells.extend(reports.iter().map(|r| fmt_bool(r.rows[i].rejected).to_string()));
        table.push(cells);
    }

    let partners = reports[0]
        .rows
        .iter()
        .zip(&records)
        .map(|(row, rec)| PartnerJson {
            partner: data.location_ids[row.partner].clone(),
            observed_t: row.observed_t,
            p_raw: row.p_raw,
            p_holm: row.p_holm,
            p_bh: row.p_bh,
            failed_replicates: rec.failed_replicates,
            null_params: rec.null_params.clone(),
            dependence: rec.dependence.clone(),
            warnings: rec.warnings.clone(),
        })
        .collect();
    let decisions: Vec<DecisionJson> = reports
        .iter()
        .map(|r| DecisionJson {
            method: r.method,
            rejected: r
                .rows
                .iter()
                .filter(|row| row.rejected)
                .map(|row| data.location_ids[row.partner].clone())
                .collect(),
            recommended: ids(&data, &r.recommended),
        })
        .collect();

    let mut pooling = Table::new(&["method", "alpha", "recommended"]);
    for d in &decisions {
        pooling.push(vec![
            method_name(d.method).into(),
            settings.alpha.to_string(),
            d.recommended.join(";"),
        ]);
    }
    let json = json_bytes(&PairsJson {
        schema: "poolreg.test-pairs/1",
        loi: data.location_ids[loi].clone(),
        bootstrap: bootstrap_name(settings.bootstrap),
        statistic: cfg.statistic,
        replicates: settings.b,
        seed: settings.seed,
        alpha: settings.alpha,
        partners,
        decisions,
    })?;
    emit(&settings, "pairs", &table, &json, args.quiet)?;
    write_atomic(&settings.out_dir, "pooling.csv", &pooling.to_csv()?)?;
    if !args.quiet {
        println!();
        print!("{}", pooling.to_text());
    }
    for rec in &records {
        for w in &rec.warnings {
            eprintln!("warning: {}: {w}", ids(&data, rec.set.locations()).join(", "));
        }
    }
    Ok(())
}

fn method_name(m: AdjustMethod) -> &'static str {
    match m {
        AdjustMethod::Im => "im",
        AdjustMethod::Holm => "holm",
        AdjustMethod::Bh => "bh",
    }
}

#[derive(Serialize)]
struct GlobalJson {
    schema: &'static str,
    locations: Vec<String>,
    statistic: StatisticKind,
    df: usize,
    replicates: usize,
    seed: u64,
    alpha: f64,
    observed_t: f64,
    p_raw: f64,
    rejected: bool,
    failed_replicates: usize,
    dependence: DependenceFit,
    warnings: Vec<String>,
}

pub fn test_global(args: &GlobalArgs) -> Result<(), CliError> {
    let settings = Settings::load(&args.common, DEFAULT_REPLICATES)?;
    if settings.bootstrap != BootstrapChoice::Ms {
        return Err(CliError::Usage("the global test uses the max-stable bootstrap (--bootstrap ms)".into()));
    }
    let loaded = load(&settings, false)?;
    loaded.require_coords()?;
    let Loaded { data, panel, .. } = loaded;
    let locs = match &args.locations {
        Some(spec) => location_list(&data, spec)?,
        None => (0..panel.n_locations()).collect(),
    };
    if locs.len() < 2 {
        return Err(CliError::Usage("the global test needs at least two locations".into()));
    }
    let cfg = bootstrap_config(&settings);
    let target = HypothesisSet::new(locs.clone(), cfg.statistic)?;
    let df = target.df();
    let mut records = bootstrap::bootstrap_global(&panel, &[target], &cfg).map_err(|e| annotate(e, &data))?;
    let rec = records.remove(0);
    let rejected = rec.p_raw <= settings.alpha;

    let mut table = Table::new(&["locations", "df", "observed_t", "p_raw", "alpha", "rejected"]);
    table.push(vec![
        ids(&data, &locs).join(";"),
        df.to_string(),
        fmt_sig(rec.observed_t),
        fmt_p(rec.p_raw),
        settings.alpha.to_string(),
        fmt_bool(rejected).into(),
    ]);
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    let json = json_bytes(&GlobalJson {
        schema: "poolreg.test-global/1",
        locations: ids(&data, &locs),
        statistic: cfg.statistic,
        df,
        replicates: settings.b,
        seed: settings.seed,
        alpha: settings.alpha,
        observed_t: rec.observed_t,
        p_raw: rec.p_raw,
        rejected,
        failed_replicates: rec.failed_replicates,
        dependence: rec.dependence,
        warnings: rec.warnings,
    })?;
    emit(&settings, "global", &table, &json, args.quiet)
}

#[derive(Serialize)]
struct RegionalJson {
    schema: &'static str,
    locations: Vec<String>,
    reference_year: i64,
    reference_covariate: f64,
    seed: u64,
    independent: bool,
    report: RegionalReport,
}

pub fn regional_rl(args: &RegionalArgs) -> Result<(), CliError> {
    let settings = Settings::load(&args.common, DEFAULT_REPLICATES)?;
    if args.period.is_none() && args.magnitude.is_none() {
        return Err(CliError::Usage("give a return period (--period) or a magnitude (--magnitude)".into()));
    }
    let loaded = load(&settings, false)?;
    let locs = location_list(&loaded.data, &args.pooled)?;
    // a single location or an independence override never looks at distances
    if !(args.independent || locs.len() == 1) {
        loaded.require_coords()?;
    }
    let Loaded { data, panel, .. } = loaded;

    let Some(t) = data.year_index(args.reference_year) else {
        let years: Vec<String> = data.years.iter().map(i64::to_string).collect();
        return Err(CliError::Usage(format!(
            "reference year {} is not in the panel; available years: {}",
            args.reference_year,
            years.join(", ")
        )));
    };
    let reference_c = data.covariate[t];
    let spec = ReturnSpec {
        period: args.period,
        magnitude: args.magnitude,
        reference_c,
    };
    let override_spec = if args.independent {
        let coords: Vec<[f64; 2]> = locs.iter().map(|&l| panel.coords()[l]).collect();
        Some(return_levels::near_independence(&coords))
    } else {
        None
    };
    let mut rng = seed::derive_rng(settings.seed, stream::REGIONAL, 0);
    let report = return_levels::estimate_regional(
        &panel,
        &locs,
        &spec,
        args.b_sim,
        &settings.max_stable_families,
        override_spec,
        &mut rng,
    )
    .map_err(|e| annotate(e, &data))?;

    let e = &report.estimate;
    let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
    let mut table = Table::new(&[
        "locations", "reference_year", "period", "rl_local", "magnitude", "rp_regional", "rl_regional",
    ]);
    table.push(vec![
        ids(&data, &locs).join(";"),
        args.reference_year.to_string(),
        args.period.map(|p| p.to_string()).unwrap_or_default(),
        opt(e.rl_local),
        fmt_sig(e.magnitude),
        fmt_sig(e.rp_regional),
        opt(e.rl_regional),
    ]);
    for w in &e.warnings {
        eprintln!("warning: {w}");
    }
    let json = json_bytes(&RegionalJson {
        schema: "poolreg.regional-rl/1",
        locations: ids(&data, &locs),
        reference_year: args.reference_year,
        reference_covariate: reference_c,
        seed: settings.seed,
        independent: args.independent,
        report,
    })?;
    emit(&settings, "regional", &table, &json, args.quiet)
}

#[derive(Serialize)]
struct SimulateJson {
    schema: &'static str,
    design: &'static str,
    config: StudyConfig,
    studies: Vec<StudyResult>,
}

fn procedure_name(p: Procedure) -> &'static str {
    match p {
        Procedure::B1 => "b1",
        Procedure::B2 => "b2",
        Procedure::B3 => "b3",
    }
}

fn pooling_name(m: PoolingMethod) -> &'static str {
    match m {
        PoolingMethod::Loi => "loi",
        PoolingMethod::Full => "full",
        PoolingMethod::MsIm => "ms_im",
        PoolingMethod::MsHolm => "ms_holm",
        PoolingMethod::MsBh => "ms_bh",
        PoolingMethod::BivIm => "biv_im",
        PoolingMethod::BivHolm => "biv_holm",
        PoolingMethod::BivBh => "biv_bh",
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let settings = Settings::load(&args.common, crate::SIMULATE_DEFAULT_B)?;
    if args.reps == 0 || args.years < fit::MIN_SERIES_LEN {
        return Err(CliError::Usage(format!(
            "need at least one replication and {} years",
            fit::MIN_SERIES_LEN
        )));
    }
    let set = match args.set {
        SetChoice::Two => DeviatingSet::Two,
        SetChoice::Seven => DeviatingSet::Seven,
    };
    let (design, scenarios) = match args.design {
        DesignChoice::Homogeneous => ("homogeneous", vec![Scenario::homogeneous(args.years)]),
        DesignChoice::Desk => ("desk", sim::desk_design(args.years, set)),
        DesignChoice::Full => ("full", sim::full_design(args.years, set)),
    };
    let mut procedures = args.procedures.clone();
    procedures.sort();
    procedures.dedup();
    let cfg = StudyConfig {
        reps: args.reps,
        bootstrap: bootstrap_config(&settings),
        procedures: procedures.iter().map(|&p| p.into()).collect(),
        methods: settings.method.methods(),
        alpha: settings.alpha,
        seed: settings.seed,
        return_levels: !args.no_return_levels,
    };

    let mut studies = Vec::with_capacity(scenarios.len());
    let total = scenarios.len();
    for (i, s) in scenarios.iter().enumerate() {
        let label = s.label();
        let result = sim::run_study_with_progress(s, &cfg, |done, reps| {
            if !args.quiet {
                eprint!("\rscenario {}/{total} {label}: {done}/{reps}", i + 1);
            }
        })
        .map_err(CliError::Numerical)?;
        if !args.quiet {
            eprintln!();
        }
        studies.push(result);
    }

    let mut metrics = Table::new(&[
        "scenario", "set", "c_mu", "c_sigma", "c_gamma", "c_alpha", "procedure", "method", "metric", "value", "reps",
    ]);
    let mut mse = Table::new(&["scenario", "pooling", "mse", "reps"]);
    for st in &studies {
        let m = &st.metrics;
        let dev = m.deviation;
        let set_name = match m.deviating_set {
            Some(DeviatingSet::Two) => "two",
            Some(DeviatingSet::Seven) => "seven",
            None => "none",
        };
        let prefix = || {
            vec![
                m.scenario.clone(),
                set_name.to_string(),
                dev.c_mu.to_string(),
                dev.c_sigma.to_string(),
                dev.c_gamma.to_string(),
                dev.c_alpha.to_string(),
            ]
        };
        if let Some(rate) = m.b1_rejection_rate {
            let mut row = prefix();
            row.extend(["b1".into(), String::new(), "rejection_rate".into(), fmt_p(rate), m.b1_reps.to_string()]);
            metrics.push(row);
        }
        for r in &m.rates {
            let mut values = vec![("fwer", Some(r.fwer)), ("fdr", Some(r.fdr)), ("power", r.power)];
            values.retain(|(_, v)| v.is_some());
            for (name, v) in values {
                let mut row = prefix();
                row.extend([
                    procedure_name(r.procedure).into(),
                    method_name(r.method).into(),
                    name.into(),
                    fmt_p(v.unwrap_or_default()),
                    r.reps.to_string(),
                ]);
                metrics.push(row);
            }
        }
        for e in &m.mse {
            mse.push(vec![m.scenario.clone(), pooling_name(e.method).into(), fmt_sig(e.mse), e.reps.to_string()]);
        }
    }
    let all_metrics: Vec<_> = studies.iter().map(|s| s.metrics.clone()).collect();
    let mut summary = Table::new(&["procedure", "method", "metric", "min", "max", "mean", "scenarios"]);
    if !studies.iter().all(|s| s.metrics.rates.is_empty()) {
        for r in sim::summarize(&all_metrics)? {
            summary.push(vec![
                procedure_name(r.procedure).into(),
                method_name(r.method).into(),
                r.metric.clone(),
                fmt_p(r.min),
                fmt_p(r.max),
                fmt_p(r.mean),
                r.scenarios.to_string(),
            ]);
        }
    }

    let json = json_bytes(&SimulateJson {
        schema: "poolreg.simulate/1",
        design,
        config: cfg,
        studies,
    })?;
    emit(&settings, "metrics", &metrics, &json, args.quiet)?;
    write_atomic(&settings.out_dir, "summary.csv", &summary.to_csv()?)?;
    write_atomic(&settings.out_dir, "mse.csv", &mse.to_csv()?)?;
    if !args.quiet && !summary.rows.is_empty() {
        println!();
        print!("{}", summary.to_text());
    }
    Ok(())
}
