//! Run configuration: flags override the config file, which overrides defaults.

use std::path::{Path, PathBuf};

use poolreg::dependence::{BivEvFamily, MaxStableFamily};
use poolreg::multitest::AdjustMethod;
use poolreg::wald::StatisticKind;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_METHOD: MethodChoice = MethodChoice::Bh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Im,
    Holm,
    Bh,
    All,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<AdjustMethod> {
        match self {
            MethodChoice::Im => vec![AdjustMethod::Im],
            MethodChoice::Holm => vec![AdjustMethod::Holm],
            MethodChoice::Bh => vec![AdjustMethod::Bh],
            MethodChoice::All => AdjustMethod::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapChoice {
    /// Max-stable model for the whole panel.
    Ms,
    /// Bivariate model per pair.
    Biv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StatisticChoice {
    /// Equal distribution of all four parameters.
    Ed,
    /// Local scaling: equal shape, trend and dispersion.
    Ls,
}

impl From<StatisticChoice> for StatisticKind {
    fn from(s: StatisticChoice) -> Self {
        match s {
            StatisticChoice::Ed => StatisticKind::Ed,
            StatisticChoice::Ls => StatisticKind::Ls,
        }
    }
}

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub panel: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    pub loi: Option<String>,
    pub method: Option<MethodChoice>,
    pub alpha: Option<f64>,
    pub bootstrap: Option<BootstrapChoice>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub seed: Option<u64>,
    pub statistic: Option<StatisticChoice>,
    pub out_dir: Option<PathBuf>,
    pub max_stable_families: Option<Vec<MaxStableFamily>>,
    pub bivariate_families: Option<Vec<BivEvFamily>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
            CliError::Ingest {
                file: path.display().to_string(),
                line,
                message: e.message().to_string(),
            }
        })
    }
}

/// Values given on the command line; `None` defers to the file or default.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Panel CSV with columns year, location_id, maximum, covariate.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Coordinates CSV with columns location_id, x, y (planar units).
    #[arg(long)]
    pub coords: Option<PathBuf>,
    /// Identifier of the location of interest.
    #[arg(long)]
    pub loi: Option<String>,
    /// Multiplicity adjustment [default: bh].
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Significance level [default: 0.1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap scheme [default: ms].
    #[arg(long, value_enum)]
    pub bootstrap: Option<BootstrapChoice>,
    /// Number of bootstrap replicates [default: 200; 99 for simulate].
    #[arg(long = "B", value_name = "B")]
    pub b: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Homogeneity hypothesis [default: ed].
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticChoice>,
    /// Directory for CSV and JSON outputs [default: current directory].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// TOML file with defaults for any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub panel: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    pub loi: Option<String>,
    pub method: MethodChoice,
    pub alpha: f64,
    pub bootstrap: BootstrapChoice,
    pub b: usize,
    pub seed: u64,
    pub statistic: StatisticChoice,
    pub out_dir: PathBuf,
    pub max_stable_families: Vec<MaxStableFamily>,
    pub bivariate_families: Vec<BivEvFamily>,
}

impl Settings {
    /// Merges flags over `file` over defaults; `default_b` depends on the command.
    pub fn resolve(args: &CommonArgs, file: FileConfig, default_b: usize) -> Result<Self, CliError> {
        let s = Settings {
            panel: args.panel.clone().or(file.panel),
            coords: args.coords.clone().or(file.coords),
            loi: args.loi.clone().or(file.loi),
            method: args.method.or(file.method).unwrap_or(DEFAULT_METHOD),
            alpha: args.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            bootstrap: args.bootstrap.or(file.bootstrap).unwrap_or(BootstrapChoice::Ms),
            b: args.b.or(file.b).unwrap_or(default_b),
            seed: args.seed.or(file.seed).unwrap_or(0),
            statistic: args.statistic.or(file.statistic).unwrap_or(StatisticChoice::Ed),
            out_dir: args.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            max_stable_families: file.max_stable_families.unwrap_or_else(|| MaxStableFamily::ALL.to_vec()),
            bivariate_families: file.bivariate_families.unwrap_or_else(|| BivEvFamily::ALL.to_vec()),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(args: &CommonArgs, default_b: usize) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::resolve(args, file, default_b)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.b == 0 {
            return Err(CliError::Usage("B must be positive".into()));
        }
        if self.max_stable_families.is_empty() || self.bivariate_families.is_empty() {
            return Err(CliError::Usage("candidate family lists must not be empty".into()));
        }
        Ok(())
    }

    pub fn panel_path(&self) -> Result<&Path, CliError> {
        self.panel
            .as_deref()
            .ok_or_else(|| CliError::Usage("a panel file is required (--panel)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file: FileConfig = toml::from_str("alpha = 0.05\nB = 50\nmethod = \"holm\"\nseed = 3\n").unwrap();
        let args = CommonArgs {
            alpha: Some(0.2),
            ..CommonArgs::default()
        };
        let s = Settings::resolve(&args, file, 200).unwrap();
        assert_eq!(s.alpha, 0.2);
        assert_eq!(s.b, 50);
        assert_eq!(s.method, MethodChoice::Holm);
        assert_eq!(s.seed, 3);

        let d = Settings::resolve(&CommonArgs::default(), FileConfig::default(), 200).unwrap();
        assert_eq!((d.alpha, d.b, d.method), (0.1, 200, MethodChoice::Bh));
    }

    #[test]
    fn rejects_bad_values() {
        let args = CommonArgs {
            alpha: Some(1.0),
            ..CommonArgs::default()
        };
        assert!(Settings::resolve(&args, FileConfig::default(), 200).is_err());
        assert!(toml::from_str::<FileConfig>("unknown = 1").is_err());
    }
}
