//! Command-line frontend for `poolreg`.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::CommonArgs;
use error::CliError;
use poolreg::return_levels::DEFAULT_SIMULATIONS;
use poolreg::sim::{self, Procedure};

/// Homogeneity tests for regional pooling of block maxima.
#[derive(Debug, Parser)]
#[command(name = "poolreg", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the scale-GEV model per location and, optionally, to a pooled set.
    Fit(FitArgs),
    /// Test every pair with the location of interest and recommend a pooling region.
    TestPairs(PairsArgs),
    /// Test homogeneity of a whole set of locations at once.
    TestGlobal(GlobalArgs),
    /// Local and regional return levels and periods for a pooled region.
    RegionalRl(RegionalArgs),
    /// Run the simulation study on the 4x4 grid.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated location ids (or `all`) to fit jointly.
    #[arg(long)]
    pub pooled: Option<String>,
    /// Do not print the table.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Do not print the table.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated location ids to test [default: all].
    #[arg(long)]
    pub locations: Option<String>,
    /// Do not print the table.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct RegionalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated location ids (or `all`) forming the pooled region.
    #[arg(long)]
    pub pooled: String,
    /// Return period in years.
    #[arg(long)]
    pub period: Option<f64>,
    /// Event magnitude whose regional return period is wanted.
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Year whose covariate value fixes the reference climate.
    #[arg(long)]
    pub reference_year: i64,
    /// Number of simulated regional maxima.
    #[arg(long, default_value_t = DEFAULT_SIMULATIONS)]
    pub b_sim: usize,
    /// Treat the locations as independent instead of fitting a dependence model.
    #[arg(long)]
    pub independent: bool,
    /// Do not print the table.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignChoice {
    /// Homogeneous model plus four corner deviations and one intermediate one.
    Desk,
    /// Every combination of the deviation grids.
    Full,
    /// Homogeneous model only.
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetChoice {
    /// Labels 4 and 8.
    Two,
    /// Labels 1, 2, 3, 4, 8, 12 and 16.
    Seven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum ProcedureChoice {
    /// Global test of the whole region.
    B1,
    /// Pairs with the location of interest, max-stable bootstrap.
    B2,
    /// Pairs with the location of interest, bivariate bootstrap.
    B3,
}

impl From<ProcedureChoice> for Procedure {
    fn from(p: ProcedureChoice) -> Self {
        match p {
            ProcedureChoice::B1 => Procedure::B1,
            ProcedureChoice::B2 => Procedure::B2,
            ProcedureChoice::B3 => Procedure::B3,
        }
    }
}

/// Replicates per bootstrap in the simulation study unless set otherwise.
pub const SIMULATE_DEFAULT_B: usize = 99;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replications per scenario.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Scenarios to run.
    #[arg(long, value_enum, default_value = "desk")]
    pub design: DesignChoice,
    /// Deviating locations.
    #[arg(long, value_enum, default_value = "two")]
    pub set: SetChoice,
    /// Comma-separated procedures to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "b1,b2,b3")]
    pub procedures: Vec<ProcedureChoice>,
    /// Years per simulated panel.
    #[arg(long, default_value_t = sim::DEFAULT_YEARS)]
    pub years: usize,
    /// Skip return-level estimation.
    #[arg(long)]
    pub no_return_levels: bool,
    /// Do not print the table.
    #[arg(long, short)]
    pub quiet: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::TestPairs(a) => commands::test_pairs(a),
        Command::TestGlobal(a) => commands::test_global(a),
        Command::RegionalRl(a) => commands::regional_rl(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}
