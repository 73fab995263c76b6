use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poolreg::gev::{self, ScaleGevParams};
use poolreg::seed;
use poolreg::sim::{self, Scenario};
use poolreg_cli::ingest::{write_panel, PanelData};
use serde_json::Value;

const FIRST_YEAR: i64 = 1951;

fn poolreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated homogeneous 4x4 panel with ids `1`..`16`.
fn simulated(n: usize, seed_value: u64) -> PanelData {
    let s = Scenario::homogeneous(n);
    let mut rng = seed::derive_rng(seed_value, seed::stream::SCENARIO, 0);
    let panel = sim::generate_scenario_data(&s, &mut rng).unwrap();
    PanelData {
        years: (0..n as i64).map(|t| FIRST_YEAR + t).collect(),
        location_ids: panel.location_ids().to_vec(),
        maxima: panel.columns().to_vec(),
        covariate: panel.covariate().values().to_vec(),
    }
}

fn subset(data: &PanelData, keep: &[usize]) -> PanelData {
    PanelData {
        years: data.years.clone(),
        location_ids: keep.iter().map(|&i| data.location_ids[i].clone()).collect(),
        maxima: keep.iter().map(|&i| data.maxima[i].clone()).collect(),
        covariate: data.covariate.clone(),
    }
}

struct Files {
    dir: tempfile::TempDir,
    panel: PathBuf,
    coords: PathBuf,
}

impl Files {
    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }

    fn out_dir(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.out(name)).unwrap()).unwrap()
    }
}

fn files(data: &PanelData) -> Files {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write_panel(data, std::fs::File::create(&panel).unwrap()).unwrap();
    let grid = sim::grid_coords();
    let mut coords = String::from("location_id,x,y\n");
    for id in &data.location_ids {
        let c = grid[id.parse::<usize>().unwrap() - 1];
        coords.push_str(&format!("{id},{},{}\n", c[0], c[1]));
    }
    let coords_path = dir.path().join("coords.csv");
    std::fs::write(&coords_path, coords).unwrap();
    Files {
        dir,
        panel,
        coords: coords_path,
    }
}

#[test]
fn fit_homogeneous_panel_gives_similar_rows() {
    let f = files(&simulated(150, 1));
    let out_dir = f.out_dir();
    let o = poolreg(&["fit", "--panel", p(&f.panel), "--pooled", "all", "--out-dir", p(&out_dir), "-q"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = f.json("fit.json");
    assert_eq!(j["schema"], "poolreg.fit/1");
    let rows = j["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 17);
    for r in &rows[..16] {
        let mu = r["fit"]["params"]["mu"].as_f64().unwrap();
        let sigma = r["fit"]["params"]["sigma"].as_f64().unwrap();
        assert!((mu / 20.0 - 1.0).abs() < 0.15, "{mu}");
        assert!((sigma / 5.5 - 1.0).abs() < 0.3, "{sigma}");
    }
    assert_eq!(rows[16]["kind"], "pooled");
    let csv = std::fs::read_to_string(f.out("fit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 18);
    assert!(csv.starts_with("kind,location_id,mu,sigma,gamma,alpha"));
}

#[test]
fn single_location_pooled_equals_local() {
    let f = files(&subset(&simulated(80, 2), &[9]));
    let out_dir = f.out_dir();
    let o = poolreg(&["fit", "--panel", p(&f.panel), "--pooled", "10", "--out-dir", p(&out_dir), "-q"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(f.out("fit.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2..7], rows[1][2..7]);
}

#[test]
fn malformed_panel_is_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("bad.csv");
    std::fs::write(&panel, "year,location_id,maximum,covariate\n2000,a,1.5,0\n,b,2.5,0\n").unwrap();
    let o = poolreg(&["fit", "--panel", p(&panel), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("location b"), "{e}");

    std::fs::write(&panel, "year,location_id,maximum,covariate\n2000,a,1,0\n2001,a,2,1\n2000,b,2,0\n").unwrap();
    let o = poolreg(&["fit", "--panel", p(&panel), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("location b has no row for year 2001"), "{}", stderr(&o));
}

#[test]
fn fit_failure_writes_error_row_and_exits_2() {
    let mut data = simulated(60, 3);
    data = subset(&data, &[0, 1]);
    data.maxima[1] = vec![7.0; data.years.len()];
    let f = files(&data);
    let out_dir = f.out_dir();
    let o = poolreg(&["fit", "--panel", p(&f.panel), "--out-dir", p(&out_dir), "-q"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let j = f.json("fit.json");
    assert!(j["rows"][0]["error"].is_null());
    assert!(j["rows"][1]["error"].as_str().unwrap().contains("degenerate"));
}

#[test]
fn usage_errors_and_help() {
    let o = poolreg(&["--help"]);
    assert_eq!(code(&o), 0);
    let o = poolreg(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    let f = files(&subset(&simulated(40, 4), &[0, 9]));
    let o = poolreg(&["test-pairs", "--panel", p(&f.panel), "--bootstrap", "biv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--loi"));
    let o = poolreg(&["test-pairs", "--panel", p(&f.panel), "--loi", "10", "--alpha", "1.5"]);
    assert_eq!(code(&o), 1);
    let o = poolreg(&["test-pairs", "--panel", p(&f.panel), "--loi", "10"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--coords"));
    let o = poolreg(&["test-pairs", "--panel", p(&f.panel), "--loi", "99", "--bootstrap", "biv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown location 99"));
}

#[test]
fn duplicated_partner_is_never_rejected() {
    let mut data = subset(&simulated(50, 5), &[9, 4]);
    data.location_ids[1] = "11".into();
    data.maxima[1] = data.maxima[0].clone();
    let f = files(&data);
    let out_dir = f.out_dir();
    let o = poolreg(&[
        "test-pairs", "--panel", p(&f.panel), "--loi", "10", "--bootstrap", "biv", "--B", "19", "--method", "all",
        "--out-dir", p(&out_dir), "-q",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = f.json("pairs.json");
    assert_eq!(j["schema"], "poolreg.test-pairs/1");
    let partner = &j["partners"][0];
    assert_eq!(partner["observed_t"].as_f64().unwrap(), 0.0);
    assert!(partner["p_raw"].as_f64().unwrap() >= 19.0 / 20.0);
    for d in j["decisions"].as_array().unwrap() {
        assert!(d["rejected"].as_array().unwrap().is_empty());
        assert_eq!(d["recommended"], serde_json::json!(["10", "11"]));
    }
    let pooling = std::fs::read_to_string(f.out("pooling.csv")).unwrap();
    assert_eq!(pooling.lines().count(), 4);
}

#[test]
fn test_pairs_is_deterministic() {
    let f = files(&subset(&simulated(50, 6), &[5, 6, 9, 10]));
    let run = |dir: &Path| {
        let o = poolreg(&[
            "test-pairs", "--panel", p(&f.panel), "--coords", p(&f.coords), "--loi", "10", "--B", "9",
            "--seed", "42", "--out-dir", p(dir), "-q",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (
            std::fs::read(dir.join("pairs.json")).unwrap(),
            std::fs::read(dir.join("pairs.csv")).unwrap(),
        )
    };
    let a = run(&f.dir.path().join("a"));
    let b = run(&f.dir.path().join("b"));
    assert_eq!(a, b);
    let csv = String::from_utf8(a.1).unwrap();
    assert_eq!(csv.lines().count(), 4);
    // p-values carry four decimals
    let p_raw = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    assert_eq!(p_raw.split('.').nth(1).unwrap().len(), 4);
}

#[test]
fn global_test_on_identical_columns() {
    let mut data = subset(&simulated(50, 7), &[0, 1, 2]);
    data.maxima[1] = data.maxima[0].clone();
    data.maxima[2] = data.maxima[0].clone();
    let f = files(&data);
    let out_dir = f.out_dir();
    let o = poolreg(&[
        "test-global", "--panel", p(&f.panel), "--coords", p(&f.coords), "--B", "19", "--out-dir", p(&out_dir), "-q",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = f.json("global.json");
    assert_eq!(j["schema"], "poolreg.test-global/1");
    assert_eq!(j["df"], 8);
    assert!(j["p_raw"].as_f64().unwrap() >= 19.0 / 20.0);
    assert_eq!(j["rejected"], false);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = files(&subset(&simulated(40, 8), &[9, 10]));
    let cfg = f.dir.path().join("run.toml");
    std::fs::write(&cfg, "alpha = 0.05\nB = 7\nbootstrap = \"biv\"\nloi = \"10\"\n").unwrap();
    let out_dir = f.out_dir();
    let o = poolreg(&[
        "test-pairs", "--config", p(&cfg), "--panel", p(&f.panel), "--B", "5", "--out-dir", p(&out_dir), "-q",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = f.json("pairs.json");
    assert_eq!(j["alpha"], 0.05);
    assert_eq!(j["replicates"], 5);
    assert_eq!(j["bootstrap"], "biv");

    std::fs::write(&cfg, "alpha = 0.05\nbogus = 1\n").unwrap();
    let o = poolreg(&["test-pairs", "--config", p(&cfg), "--panel", p(&f.panel)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

fn regional(f: &Files, extra: &[&str]) -> Value {
    let out_dir = f.out_dir();
    let mut args = vec![
        "regional-rl", "--panel", p(&f.panel), "--coords", p(&f.coords), "--period", "100", "--out-dir", p(&out_dir),
        "-q",
    ];
    args.extend_from_slice(extra);
    let o = poolreg(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    f.json("regional.json")
}

#[test]
fn regional_single_location_matches_local() {
    let data = simulated(75, 9);
    let last = data.years.last().unwrap().to_string();
    let f = files(&data);
    let j = regional(&f, &["--pooled", "10", "--reference-year", &last, "--b-sim", "100000"]);
    assert_eq!(j["schema"], "poolreg.regional-rl/1");
    let e = &j["report"]["estimate"];
    let local = e["rl_local"].as_f64().unwrap();
    let reg = e["rl_regional"].as_f64().unwrap();
    assert!((reg / local - 1.0).abs() < 0.01, "{reg} vs {local}");
}

#[test]
fn regional_independence_matches_closed_form() {
    let data = simulated(75, 10);
    let last = data.years.last().unwrap().to_string();
    let f = files(&data);
    let j = regional(
        &f,
        &["--pooled", "all", "--reference-year", &last, "--b-sim", "100000", "--independent", "--seed", "3"],
    );
    let theta: ScaleGevParams = serde_json::from_value(j["report"]["pooled"]["params"].clone()).unwrap();
    let c = j["reference_covariate"].as_f64().unwrap();
    // max of 16 independent GEV variables: G(r)^16 = 1 - 1/T
    let oracle = gev::gev_quantile((1.0 - 0.01f64).powf(1.0 / 16.0), &theta.effective(c)).unwrap();
    let reg = j["report"]["estimate"]["rl_regional"].as_f64().unwrap();
    assert!((reg / oracle - 1.0).abs() < 0.03, "{reg} vs {oracle}");
    assert!(j["report"]["dependence"].is_null());
}

#[test]
fn regional_unknown_year_lists_available() {
    let f = files(&subset(&simulated(30, 11), &[9]));
    let o = poolreg(&["regional-rl", "--panel", p(&f.panel), "--pooled", "10", "--period", "50", "--reference-year", "1800"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("1800") && e.contains("1951, 1952"), "{e}");
}

#[test]
fn simulate_writes_plot_ready_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = poolreg(&[
        "simulate", "--design", "homogeneous", "--reps", "2", "--B", "9", "--procedures", "b1,b2", "--years", "40",
        "--no-return-levels", "--out-dir", p(dir.path()), "-q",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("scenario,set,c_mu,c_sigma,c_gamma,c_alpha,procedure,method,metric,value,reps"));
    assert!(metrics.contains(",b1,,rejection_rate,"));
    assert!(metrics.contains(",b2,bh,fwer,"));
    let j: Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(j["schema"], "poolreg.simulate/1");
    assert_eq!(j["studies"][0]["replications"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("mse.csv").exists());
}
