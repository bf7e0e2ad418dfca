use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use tscast_cli::commands::{self, CliError};
use tscast_cli::config::RunConfig;

/// Monthly time-series forecasting: ARIMA/SARIMA/SARIMAX, epsilon-SVR
/// and an additive hybrid model, with rolling one-step evaluation.
#[derive(Parser)]
#[command(name = "tscast", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Shared options; flags override values from `--config`.
#[derive(Args, Debug, Default)]
struct Opts {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target CSV (header `month,value`).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Exogenous regressor CSV; may repeat.
    #[arg(long)]
    regressor: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (synthetic data, hybrid training).
    #[arg(long)]
    seed: Option<u64>,
    /// Test window length in months.
    #[arg(long)]
    n_test: Option<usize>,
    /// Months of synthetic data to generate.
    #[arg(long)]
    months: Option<usize>,
    /// Model name: arima, sarima, sarimax, svr or hybrid.
    #[arg(long)]
    model: Option<String>,
    /// Forecast horizon in months.
    #[arg(long)]
    horizon: Option<usize>,
    /// Reuse the first fit instead of refitting every test month.
    #[arg(long)]
    no_refit: bool,
    /// Noise level of the synthetic generator (visitors).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// SVR regularization weight.
    #[arg(long)]
    svr_c: Option<f64>,
    /// SVR tube half-width (normalized target scale).
    #[arg(long)]
    svr_epsilon: Option<f64>,
    /// SVR lag count.
    #[arg(long)]
    svr_lags: Option<usize>,
    /// Hybrid training epochs.
    #[arg(long)]
    hybrid_epochs: Option<usize>,
    /// Hybrid learning rate.
    #[arg(long)]
    hybrid_learning_rate: Option<f64>,
    /// Hybrid hidden layer widths, comma separated (empty for linear).
    #[arg(long)]
    hybrid_hidden: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic visitors + search-interest dataset.
    Synth(Opts),
    /// Fit one model on the full series and report its parameters.
    Fit(Opts),
    /// Multi-step forecast beyond the end of the series (arima/sarima).
    Forecast(Opts),
    /// Rolling one-step evaluation of one model over the test window.
    Evaluate(Opts),
    /// Rolling evaluation of the five-model suite on a shared split.
    Compare(Opts),
    /// Fit the hybrid model and emit its additive decomposition.
    Components(Opts),
}

fn resolve(opts: &Opts) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &opts.config {
        config
            .load_file(path)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(v) = &opts.target {
        config.target = Some(v.clone());
    }
    for r in &opts.regressor {
        config.regressors.push(r.clone());
    }
    if let Some(v) = &opts.out {
        config.out_dir = v.clone();
    }
    if let Some(v) = opts.seed {
        config.seed = v;
    }
    if let Some(v) = opts.n_test {
        config.n_test = v;
    }
    if let Some(v) = opts.months {
        config.months = v;
    }
    if let Some(v) = &opts.model {
        config.model = Some(v.clone());
    }
    if let Some(v) = opts.horizon {
        config.horizon = v;
    }
    if opts.no_refit {
        config.refit = false;
    }
    if let Some(v) = opts.noise_sd {
        config.noise_sd = v;
    }
    if let Some(v) = opts.svr_c {
        config.svr_c = v;
    }
    if let Some(v) = opts.svr_epsilon {
        config.svr_epsilon = v;
    }
    if let Some(v) = opts.svr_lags {
        config.svr_lags = v;
    }
    if let Some(v) = opts.hybrid_epochs {
        config.hybrid_epochs = v;
    }
    if let Some(v) = opts.hybrid_learning_rate {
        config.hybrid_learning_rate = v;
    }
    if let Some(v) = &opts.hybrid_hidden {
        config
            .apply("hybrid_hidden", v)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(opts) => commands::cmd_synth(&resolve(opts)?),
        Command::Fit(opts) => commands::cmd_fit(&resolve(opts)?),
        Command::Forecast(opts) => commands::cmd_forecast(&resolve(opts)?),
        Command::Evaluate(opts) => commands::cmd_evaluate(&resolve(opts)?),
        Command::Compare(opts) => commands::cmd_compare(&resolve(opts)?),
        Command::Components(opts) => commands::cmd_components(&resolve(opts)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let kind = err.kind();
            let _ = err.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
