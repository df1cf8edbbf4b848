//! Command-line front end for product-method mediation analysis.
//!
//! * `analyze` — fit the outcome and mediator models on a CSV file and report
//!   NIE, TE and MP with delta-method (and optionally bootstrap) intervals.
//! * `simulate` — run one Monte Carlo scenario from a TOML file and write
//!   bias / coverage / variance-ratio metrics as CSV.
//! * `sweep` — the same over a list of baseline outcome prevalences.

pub mod analyze;
pub mod error;
pub mod input;
pub mod report;
pub mod scenario;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mediation_core::simulation::{prevalence_sweep, run_scenario_with};
use mediation_core::Execution;

pub use analyze::{analyze, render_table, AnalysisConfig, AnalysisReport, FlavorSelection, ResultRow};
pub use error::CliError;
pub use input::{load_csv, ColumnRoles};
pub use report::{metrics_records, to_csv, write_atomic, MetricsRecord};
pub use scenario::ScenarioFile;

#[derive(Debug, Parser)]
#[command(name = "mediate", version, about = "Product-method mediation analysis", allow_negative_numbers = true)]
pub struct Cli {
    /// Worker threads for bootstrap and simulation loops (1 = sequential;
    /// default: all cores). Results do not depend on this setting.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate mediation measures from a CSV file.
    Analyze(AnalyzeArgs),
    /// Run one simulation scenario.
    Simulate(SimulateArgs),
    /// Run a scenario over a grid of baseline outcome prevalences.
    Sweep(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input CSV (header row, comma-delimited, numeric cells).
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub outcome: String,
    /// Mediator column.
    #[arg(long)]
    pub mediator: String,
    /// Exposure column.
    #[arg(long)]
    pub exposure: String,
    #[arg(long)]
    pub binary_outcome: bool,
    #[arg(long)]
    pub binary_mediator: bool,
    /// Outcome-model covariate columns, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates_outcome: Vec<String>,
    /// Mediator-model covariate columns, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates_mediator: Vec<String>,
    /// Reference exposure level.
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    /// Comparison exposure level.
    #[arg(long, default_value_t = 1.0)]
    pub x1: f64,
    /// Outcome-model covariate values to condition on (default zeros).
    #[arg(long, value_delimiter = ',')]
    pub c_outcome: Vec<f64>,
    /// Mediator-model covariate values to condition on (default zeros).
    #[arg(long, value_delimiter = ',')]
    pub c_mediator: Vec<f64>,
    /// Add percentile-bootstrap intervals.
    #[arg(long)]
    pub boot: bool,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 2000)]
    pub boot_r: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flavors to report (default: both for a binary outcome, exact otherwise).
    #[arg(long, value_enum)]
    pub flavor: Option<FlavorSelection>,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = analyze::CovarianceChoice::Sandwich)]
    pub covariance: analyze::CovarianceChoice,
    /// Gauss–Hermite nodes for the exact continuous-mediator expressions.
    #[arg(long, default_value_t = mediation_core::DEFAULT_GHQ_NODES)]
    pub nodes: usize,
    /// Also write the JSON document here (`-` prints it instead of the table).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scenario file.
    pub scenario: PathBuf,
    /// Metrics CSV destination (default: standard output).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Fill the wall_seconds column. Off by default so output is reproducible.
    #[arg(long)]
    pub timing: bool,
}

impl From<&AnalyzeArgs> for AnalysisConfig {
    fn from(a: &AnalyzeArgs) -> Self {
        AnalysisConfig {
            data_path: a.data.clone(),
            outcome: a.outcome.clone(),
            mediator: a.mediator.clone(),
            exposure: a.exposure.clone(),
            binary_outcome: a.binary_outcome,
            binary_mediator: a.binary_mediator,
            covariates_outcome: a.covariates_outcome.clone(),
            covariates_mediator: a.covariates_mediator.clone(),
            x0: a.x0,
            x1: a.x1,
            c_outcome: a.c_outcome.clone(),
            c_mediator: a.c_mediator.clone(),
            boot: a.boot,
            boot_r: a.boot_r,
            seed: a.seed,
            flavor: a.flavor,
            level: a.level,
            covariance: a.covariance,
            ghq_nodes: a.nodes,
        }
    }
}

/// Execute a parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let text = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".to_string())),
        Some(1) => dispatch(cli, Execution::Sequential)?,
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {t} threads: {e}")))?;
            pool.install(|| dispatch(cli, Execution::Parallel))?
        }
        None => dispatch(cli, Execution::Parallel)?,
    };
    out.write_all(&text).map_err(CliError::io("<stdout>"))
}

/// Run the command; files are written here, standard output is returned.
fn dispatch(cli: &Cli, exec: Execution) -> Result<Vec<u8>, CliError> {
    match &cli.command {
        Command::Analyze(args) => {
            let report = analyze(&AnalysisConfig::from(args), exec)?;
            Ok(match &args.json {
                Some(p) if p.as_os_str() == "-" => report.to_json().into_bytes(),
                Some(p) => {
                    write_atomic(p, report.to_json().as_bytes())?;
                    render_table(&report).into_bytes()
                }
                None => render_table(&report).into_bytes(),
            })
        }
        Command::Simulate(args) => {
            let file = ScenarioFile::read(&args.scenario)?;
            if file.prevalences.is_some() {
                return Err(CliError::Config("`prevalences` belongs in a sweep file; use `sweep`".to_string()));
            }
            let scenario = file.scenario()?;
            let start = Instant::now();
            let metrics = run_scenario_with(&scenario, exec)?;
            let seconds = args.timing.then(|| start.elapsed().as_secs_f64());
            let csv = to_csv(&metrics_records(&scenario, &Ok(metrics), seconds))?;
            emit(args, csv)
        }
        Command::Sweep(args) => {
            let file = ScenarioFile::read(&args.scenario)?;
            let prevalences = file
                .prevalences
                .clone()
                .ok_or_else(|| CliError::Config("sweep file needs `prevalences`".to_string()))?;
            let base = file.scenario()?;
            // reject bad grid values before spending time on any cell
            for &p in &prevalences {
                let mut cell = base.clone();
                cell.outcome_prevalence = p;
                cell.validate()?;
            }
            let mut records = Vec::new();
            for &p in &prevalences {
                let start = Instant::now();
                let cell = prevalence_sweep(&base, &[p], exec)?.remove(0);
                let seconds = args.timing.then(|| start.elapsed().as_secs_f64());
                let mut scenario = base.clone();
                scenario.outcome_prevalence = cell.prevalence;
                records.extend(metrics_records(&scenario, &cell.result, seconds));
            }
            emit(args, to_csv(&records)?)
        }
    }
}

fn emit(args: &SimulateArgs, csv: Vec<u8>) -> Result<Vec<u8>, CliError> {
    match &args.output {
        Some(p) => write_atomic(p, &csv).map(|()| Vec::new()),
        None => Ok(csv),
    }
}
