//! `postpi` command line: seeded simulation studies, estimation on user
//! CSV files, and report rendering. Exit codes: 0 success, 2 bad usage or
//! input schema, 3 runtime failure.

mod data;
mod report;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use postpi::{
    render_table, run_monte_carlo, InferenceOptions, Method, MonteCarloConfig, SimSetting,
};

use data::{load_dataset, EstimateInput};
use report::{
    write_atomic, CliError, CliResult, EstimateReport, ReportCoefficient, SimulateReport,
    SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(name = "postpi", version, about = "Inference on predicted outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte Carlo study of one simulation setting
    Simulate(SimulateArgs),
    /// Fit one estimator to labeled/unlabeled CSV files
    Estimate(EstimateArgs),
    /// Merge simulate metrics files into one comparison table
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation setting: 1, 2, or 3
    #[arg(long)]
    setting: u8,
    /// Training rows (defaults to the setting's allocation)
    #[arg(long = "n-t")]
    n_t: Option<usize>,
    /// Labeled rows
    #[arg(long)]
    n: Option<usize>,
    /// Unlabeled rows
    #[arg(long = "big-n")]
    big_n: Option<usize>,
    /// True effect on the first covariate
    #[arg(long, default_value_t = 0.0)]
    beta1: f64,
    /// Monte Carlo replicates
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Base seed; replicate r uses stream r
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated subset of oracle,classical,naive,postpi,proposed
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Nominal test level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Use a t reference distribution instead of the normal
    #[arg(long = "t-approx")]
    t_approx: bool,
    /// Output path prefix; writes <out>.metrics.json, <out>.metrics.csv,
    /// and <out>.replicates.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Labeled CSV: outcome, prediction, and covariate columns
    #[arg(long)]
    labeled: PathBuf,
    /// Unlabeled CSV: prediction and covariate columns
    #[arg(long)]
    unlabeled: PathBuf,
    /// Outcome column name in the labeled file
    #[arg(long = "outcome-col", default_value = "y")]
    outcome_col: String,
    /// Prediction column name in both files
    #[arg(long = "prediction-col", default_value = "f")]
    prediction_col: String,
    /// Comma-separated covariate columns; defaults to every remaining
    /// labeled column, in header order
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// One of oracle,classical,naive,postpi,proposed
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "t-approx")]
    t_approx: bool,
    /// Result JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more <prefix>.metrics.json files from `simulate`
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    /// Rendered table path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn parse_methods(raw: &Option<Vec<String>>) -> CliResult<Vec<Method>> {
    match raw {
        None => Ok(Method::ALL.to_vec()),
        Some(names) => names
            .iter()
            .map(|name| Method::from_str(name.trim()).map_err(CliError::config))
            .collect(),
    }
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    let mut setting = SimSetting::defaults(args.setting, args.beta1).map_err(CliError::config)?;
    if let Some(n_t) = args.n_t {
        setting.n_t = n_t;
    }
    if let Some(n) = args.n {
        setting.n = n;
    }
    if let Some(big_n) = args.big_n {
        setting.big_n = big_n;
    }
    let methods = parse_methods(&args.methods)?;

    let mut config = MonteCarloConfig::new(setting, args.reps, args.seed);
    config.methods = methods;
    config.alpha = args.alpha;
    config.t_approx = args.t_approx;

    let result = run_monte_carlo(&config).map_err(CliError::runtime)?;
    let table = render_table(&result.rows).map_err(CliError::runtime)?;
    print!("{table}");

    if let Some(prefix) = &args.out {
        let report = SimulateReport {
            schema_version: SCHEMA_VERSION,
            alpha: args.alpha,
            t_approx: args.t_approx,
            seed: args.seed,
            reps: args.reps,
            rows: result.rows.clone(),
        };
        let json = serde_json::to_string_pretty(&report).map_err(CliError::runtime)? + "\n";
        write_atomic(&with_suffix(prefix, ".metrics.json"), json.as_bytes())?;
        write_atomic(
            &with_suffix(prefix, ".metrics.csv"),
            &report::metrics_csv(&result.rows)?,
        )?;
        write_atomic(
            &with_suffix(prefix, ".replicates.csv"),
            &report::replicates_csv(&result.replicates)?,
        )?;
    }
    Ok(())
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = prefix.to_path_buf().into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    let method = Method::from_str(args.method.trim()).map_err(CliError::config)?;
    let input = EstimateInput {
        labeled: args.labeled,
        unlabeled: args.unlabeled,
        outcome_col: args.outcome_col,
        prediction_col: args.prediction_col,
        covariates: args.covariates,
    };
    let (dataset, covariate_names) = load_dataset(&input)?;

    let opts = InferenceOptions {
        alpha: args.alpha,
        t_approx: args.t_approx,
    };
    let fit = match method {
        Method::Oracle => postpi::estimate_oracle(&dataset, &opts),
        Method::Classical => postpi::estimate_classical(&dataset, &opts),
        Method::Naive => postpi::estimate_naive(&dataset, &opts),
        Method::Postpi | Method::Proposed => {
            let rel = postpi::fit_relationship(&dataset.y_labeled, &dataset.f_labeled)
                .map_err(CliError::runtime)?;
            if method == Method::Postpi {
                postpi::estimate_postpi(&dataset, &rel, &opts)
            } else {
                postpi::estimate_proposed(&dataset, &rel, &opts)
            }
        }
    }
    .map_err(CliError::runtime)?;

    let mut names = vec!["intercept".to_string()];
    names.extend(covariate_names);
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(k, name)| ReportCoefficient {
            name: name.clone(),
            estimate: fit.beta[k],
            se: fit.se[k],
            ci_low: fit.ci_low[k],
            ci_high: fit.ci_high[k],
            p_value: fit.p_value[k],
        })
        .collect();
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        method,
        alpha: args.alpha,
        n: fit.n,
        big_n: fit.big_n,
        coefficients,
    };
    let json = serde_json::to_string_pretty(&report).map_err(CliError::runtime)? + "\n";
    match &args.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for path in &args.metrics {
        let report = report::read_metrics(path)?;
        rows.extend(report.rows);
    }
    let table = render_table(&rows).map_err(CliError::runtime)?;
    match &args.out {
        Some(path) => write_atomic(path, table.as_bytes())?,
        None => print!("{table}"),
    }
    Ok(())
}
