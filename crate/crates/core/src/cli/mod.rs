//! Command-line front end: `fit`, `test`, `simulate`, `mc` and `analyze`.
//!
//! Exit status is 0 on success, 1 on domain or I/O errors and 2 on usage
//! errors. When `--seed` is omitted the seed is read from `HQREG_SEED`
//! (default 0).

pub mod analyze;
pub mod data;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::harness::{run_coverage_experiment, summarize, write_csv, write_summary, ExperimentGrid};
use crate::homtest::{run_homogeneity_test, HomogeneityConfig, Method, SurrogateChoice};
use crate::quantreg::{fit_quantile_regression, polynomial_design, SolverConfig};
use crate::rng;
use crate::simgen::{write_series_csv, MMProcessSpec};
use crate::tailstats::{annotate_tail_scale, TaperKind, TaperSpec};

use analyze::{analyze_financial, write_plot_csv, AnalyzeConfig};
use data::{parse_timeseries_csv, read_weights, Schema, SeriesDataset};

pub use analyze::AnalysisReport;
pub use data::{log_returns, parse_timeseries_str};

/// Environment variable consulted for the default seed.
pub const SEED_ENV: &str = "HQREG_SEED";

#[derive(Debug, Parser)]
#[command(name = "hqreg", version, about = "High quantile regression and cross-quantile homogeneity tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a quantile regression at one level.
    Fit(FitArgs),
    /// Test slope homogeneity between two tail levels.
    Test(TestArgs),
    /// Emit a simulated moving-maximum series.
    Simulate(SimulateArgs),
    /// Run a coverage experiment from a grid configuration.
    Mc(McArgs),
    /// Analyze a daily price series.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// fred or generic
    #[arg(long, default_value = "generic")]
    schema: String,
    /// Response column (generic schema).
    #[arg(long, default_value = "y")]
    response: String,
    /// Polynomial trend design with P columns, t = i/n.
    #[arg(long, value_name = "P", conflicts_with = "design")]
    poly: Option<usize>,
    /// Comma-separated regressor columns; an intercept is prepended.
    #[arg(long, value_name = "COLS", value_delimiter = ',')]
    design: Option<Vec<String>>,
}

impl InputArgs {
    fn load(&self) -> Result<(SeriesDataset, DMatrix<f64>)> {
        let cols = self.design.clone().unwrap_or_default();
        let schema = Schema::parse(&self.schema, Some(&self.response), &cols)?;
        let d = parse_timeseries_csv(&self.input, &schema)?;
        let x = match self.design {
            Some(_) => d.design_with_intercept(),
            None => polynomial_design(d.len(), self.poly.unwrap_or(2)),
        };
        Ok((d, x))
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Quantile level 1 − α.
    #[arg(long)]
    level: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    alpha1: f64,
    #[arg(long)]
    alpha2: f64,
    /// generative, chisq1 or chisq2
    #[arg(long, default_value = "generative")]
    method: String,
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// bartlett, flat_top or truncated
    #[arg(long)]
    taper: Option<String>,
    #[arg(long)]
    bandwidth: Option<usize>,
    /// frechet, gpd or exponential
    #[arg(long, default_value = "frechet")]
    surrogate: String,
    #[arg(long = "gamma-weights", value_name = "FILE")]
    gamma_weights: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// exponential or frechet
    #[arg(long, default_value = "exponential")]
    family: String,
    #[arg(long)]
    n: usize,
    /// Moving-maximum coefficients (one value for the exponential family).
    #[arg(long, value_delimiter = ',', default_value = "1")]
    a: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output stem; `.csv` and `.json` are written.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "fred")]
    schema: String,
    /// Column holding prices (generic schema).
    #[arg(long, default_value = "y")]
    response: String,
    /// Analyze negated returns (the default).
    #[arg(long, overrides_with = "no_negate")]
    negate: bool,
    /// Analyze raw returns instead of losses.
    #[arg(long, overrides_with = "negate")]
    no_negate: bool,
    /// Tail-mass pairs, e.g. "0.05:0.01,0.5:0.05".
    #[arg(long, default_value = "0.05:0.01,0.5:0.05")]
    pairs: String,
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "frechet")]
    surrogate: String,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn seed_or_env(seed: Option<u64>) -> Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
            Err(_) => Ok(0),
        },
    }
}

/// Parses `"a1:a2,a1:a2"`.
pub fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (l, r) = pair
                .split_once(':')
                .ok_or_else(|| Error::InvalidParameter(format!("pair '{pair}' is not of the form a1:a2")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad tail mass '{s}' in pair '{pair}'")))
            };
            Ok((num(l)?, num(r)?))
        })
        .collect()
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn taper_from(kind: Option<&str>, bandwidth: Option<usize>, n: usize) -> Result<Option<TaperSpec>> {
    if kind.is_none() && bandwidth.is_none() {
        return Ok(None);
    }
    let mut t = TaperSpec::default_for(n);
    if let Some(k) = kind {
        t.kind = k.parse::<TaperKind>()?;
    }
    if let Some(b) = bandwidth {
        t.bandwidth = b;
    }
    Ok(Some(t))
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let (d, x) = args.input.load()?;
    let ctx = crate::quantreg::DesignContext::new(x)?;
    let mut fit = fit_quantile_regression(&ctx, &d.y, args.level, &SolverConfig::default())?;
    annotate_tail_scale(&mut fit, None)?;
    let summary = serde_json::json!({
        "level": fit.level,
        "beta_hat": fit.beta_hat,
        "loss": fit.loss,
        "iterations": fit.iterations,
        "sparsity": fit.sparsity,
        "tau_hat": fit.tau_hat,
        "exceedance_rate": fit.exceedance_rate(),
        "dropped_rows": d.provenance.dropped_rows,
    });
    write_or_print(args.output.as_deref(), &serde_json::to_string_pretty(&summary)?)
}

fn run_test(args: &TestArgs) -> Result<()> {
    let (d, x) = args.input.load()?;
    let method: Method = args.method.parse()?;
    let weights = args.gamma_weights.as_deref().map(read_weights).transpose()?;
    let config = HomogeneityConfig {
        replicates: args.b,
        seed: seed_or_env(args.seed)?,
        surrogate: args.surrogate.parse::<SurrogateChoice>()?,
        taper: taper_from(args.taper.as_deref(), args.bandwidth, d.len())?,
        weights,
        ..HomogeneityConfig::default()
    };
    let result = run_homogeneity_test(x, &d.y, args.alpha1, args.alpha2, method, &config)?;
    write_or_print(args.output.as_deref(), &serde_json::to_string_pretty(&result)?)
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let spec = match args.family.as_str() {
        "exponential" => MMProcessSpec::exponential(args.a.first().copied().unwrap_or(1.0), args.alpha)?,
        "frechet" => MMProcessSpec::frechet(args.a.clone(), args.kappa, args.alpha)?,
        other => return Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
    };
    let y = spec.simulate(args.n, &mut rng::stream(seed_or_env(args.seed)?, 0));
    write_series_csv(&args.output, &y)
}

fn run_mc(args: &McArgs) -> Result<()> {
    let grid = ExperimentGrid::from_path(&args.config)?;
    let cells = run_coverage_experiment(&grid, args.jobs)?;
    match &args.out {
        Some(stem) => write_summary(&cells, stem),
        None => write_csv(&summarize(&cells), std::io::stdout()),
    }
}

fn run_analyze(args: &AnalyzeArgs) -> Result<()> {
    let schema = Schema::parse(&args.schema, Some(&args.response), &[])?;
    let d = parse_timeseries_csv(&args.input, &schema)?;
    let config = AnalyzeConfig {
        negate: !args.no_negate,
        replicates: args.b,
        seed: seed_or_env(args.seed)?,
        surrogate: args.surrogate.parse()?,
        taper: None,
    };
    let (report, returns) = analyze_financial(&d, &parse_pairs(&args.pairs)?, &config)?;
    if let Some(p) = &args.plot {
        write_plot_csv(&returns, std::fs::File::create(p)?)?;
    }
    match &args.output {
        Some(p) => {
            std::fs::write(p, report.to_json()? + "\n")?;
            print!("{}", report.summary());
            Ok(())
        }
        None => write_or_print(None, &report.to_json()?),
    }
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit status.
pub fn main(argv: impl IntoIterator<Item = impl Into<std::ffi::OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Test(a) => run_test(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Mc(a) => run_mc(a),
        Command::Analyze(a) => run_analyze(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
